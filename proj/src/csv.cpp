#include "deepdtf/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "deepdtf/error.hpp"

namespace deepdtf::csv {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  throw DataError(source + ": missing column '" + std::string(name) + "'");
}

std::string Table::where(std::size_t row, std::size_t col) const {
  std::string s = source + ":" + std::to_string(line_numbers.at(row));
  if (col < header.size()) s += " (column '" + header[col] + "')";
  return s;
}

Table parse(std::string_view text, std::string source) {
  Table t;
  t.source = std::move(source);
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t line = 1;
  std::size_t record_line = 1;
  bool record_started = false;

  auto finish_record = [&]() {
    record.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      if (t.header.empty() && t.rows.empty()) {
        t.header = std::move(record);
      } else {
        if (record.size() != t.header.size()) {
          throw DataError(t.source + ":" + std::to_string(record_line) + ": expected " +
                          std::to_string(t.header.size()) + " fields, found " +
                          std::to_string(record.size()));
        }
        t.rows.push_back(std::move(record));
        t.line_numbers.push_back(record_line);
      }
    }
    record.clear();
    record_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!record_started) {
      record_started = true;
      record_line = line;
    }
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || field_was_quoted)
        throw DataError(t.source + ":" + std::to_string(line) + ": stray quote inside field");
      in_quotes = true;
      field_was_quoted = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (c == '\n') {
      finish_record();
      ++line;
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      field += c;
    } else {
      if (field_was_quoted)
        throw DataError(t.source + ":" + std::to_string(line) + ": text after closing quote");
      field += c;
    }
  }
  if (in_quotes) throw DataError(t.source + ":" + std::to_string(record_line) + ": unterminated quoted field");
  if (record_started) finish_record();
  if (t.header.empty()) throw DataError(t.source + ": missing header row");
  if (!t.header.empty() && t.header[0].rfind("\xEF\xBB\xBF", 0) == 0) t.header[0].erase(0, 3);
  return t;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return parse(ss.str(), path.string());
}

double to_double(const Table& t, std::size_t row, std::size_t col, bool allow_missing) {
  const std::string& s = t.rows.at(row).at(col);
  if (allow_missing && (s.empty() || s == "NA" || s == "NaN" || s == "nan"))
    return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty())
    throw DataError(t.where(row, col) + ": not a number: '" + s + "'");
  if (!std::isfinite(v)) throw DataError(t.where(row, col) + ": non-finite value '" + s + "'");
  return v;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace deepdtf::csv
