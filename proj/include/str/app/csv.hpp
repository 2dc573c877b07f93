#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "str/errors.hpp"

namespace str::app {

/// Header plus raw string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// Source line of each row, for diagnostics.
  std::vector<std::size_t> lines;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return std::nullopt;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  if (quoted) throw DataError("line " + std::to_string(lineno) + ": unterminated quoted field");
  cells.push_back(std::move(cell));
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in, const std::string& source = "input") {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
      if (detail::trim(line).empty()) continue;
      for (auto& h : detail::split_csv_line(line, lineno)) t.header.emplace_back(detail::trim(h));
      have_header = true;
      continue;
    }
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line, lineno);
    if (cells.size() != t.header.size()) {
      throw DataError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.lines.push_back(lineno);
  }
  if (!have_header) throw DataError(source + ": missing header row");
  return t;
}

inline CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return read_csv(in, path.string());
}

/// Parses a numeric cell; blank means missing.
inline std::optional<double> parse_cell(const std::string& cell, const std::string& where) {
  const std::string_view s = detail::trim(cell);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    if (s == "NA" || s == "NaN" || s == "nan") return std::nullopt;
    throw DataError(where + ": '" + std::string(s) + "' is not a number");
  }
  if (!std::isfinite(v)) throw DataError(where + ": non-finite value");
  return v;
}

/// Numeric column with blanks as missing.
inline std::vector<std::optional<double>> numeric_column(const CsvTable& t, const std::string& name,
                                                         const std::string& source = "input") {
  const auto j = t.column(name);
  if (!j) throw DataError(source + ": no column named '" + name + "'");
  std::vector<std::optional<double>> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out.push_back(parse_cell(t.rows[r][*j], source + ":" + std::to_string(t.lines[r]) + " column '" + name + "'"));
  }
  return out;
}

/// Seventeen significant digits, enough to read back the same double.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

inline std::string quote_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace str::app
