#pragma once

// Minimal RFC 4180 reader: comma separated, optional double-quoted fields,
// header row required. Malformed input throws DataError naming file:line.

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace deepdtf::csv {

struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::size_t column(std::string_view name) const;  // DataError if absent
  std::string where(std::size_t row, std::size_t col) const;
};

Table parse(std::string_view text, std::string source = "<memory>");
Table read(const std::filesystem::path& path);  // IoError if unreadable

// Strict numeric field; empty, "NA", "NaN" and "nan" give quiet NaN when
// allow_missing is set.
double to_double(const Table& t, std::size_t row, std::size_t col, bool allow_missing = false);

std::string escape(std::string_view field);

}  // namespace deepdtf::csv
