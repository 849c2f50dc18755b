#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cci::csv {

using Row = std::vector<std::string>;

// RFC 4180 quoting: fields containing comma, quote or newline are quoted and
// embedded quotes doubled.
std::string format_row(const Row& fields);

std::vector<Row> parse(std::string_view text);

std::vector<Row> read_file(const std::filesystem::path& path);

}  // namespace cci::csv
