#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "tempdir.hpp"

namespace cci::testing {

struct ToolRun {
  int code = -1;
  std::string err;  // stderr
};

// Runs the cci binary with `args` (shell syntax) and captures stderr.
inline ToolRun run_tool(const std::string& tool, const std::string& args, const std::filesystem::path& scratch) {
  const auto err_file = scratch / "stderr.txt";
  const std::string cmd = "'" + tool + "' " + args + " > /dev/null 2> '" + err_file.string() + "'";
  const int status = std::system(cmd.c_str());
  ToolRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_file);
  return r;
}

// Last stderr line, which carries the error JSON on failure.
inline std::string last_line(const std::string& text) {
  std::string s = text;
  while (!s.empty() && s.back() == '\n') s.pop_back();
  const auto nl = s.rfind('\n');
  return nl == std::string::npos ? s : s.substr(nl + 1);
}

}  // namespace cci::testing
