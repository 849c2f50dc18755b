#pragma once

#include <stdexcept>
#include <string>

namespace cci {

// Base for everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input from the caller: malformed files, shape mismatches, unknown
// labels, out-of-range parameters. The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

// External service failures (judge endpoint, hook commands).
class ServiceError : public Error {
 public:
  using Error::Error;
};

}  // namespace cci
