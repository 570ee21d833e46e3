#pragma once

// Minimal delimited-text reader: header row, configurable single-character
// delimiter, no quoting (none of the supported formats needs it). Cell
// errors are reported with 1-based line numbers.

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "remkit/error.hpp"

namespace remkit::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // cell strings, trimmed
  std::vector<std::size_t> line_numbers;       // source line per row

  // Index of a header column, or npos.
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return npos;
  }
  std::size_t require_column(const std::string& name) const {
    const std::size_t j = column(name);
    if (j == npos) fail(errc::schema, "missing required column '" + name + "'");
    return j;
  }
};

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == delim) {
      cells.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return cells;
}

inline Table read(std::istream& in, char delim = ',') {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(line, delim);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      fail(errc::parse, "line " + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " cells, got " +
                            std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) fail(errc::schema, "empty input: no header row");
  return t;
}

inline Table read_file(const std::string& path, char delim = ',') {
  std::ifstream in(path);
  if (!in) fail(errc::config, "cannot open file: " + path);
  return read(in, delim);
}

inline double parse_real(const std::string& cell, std::size_t lineno, const std::string& what) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    fail(errc::parse,
         "line " + std::to_string(lineno) + ": unparseable " + what + " '" + cell + "'");
  return value;
}

}  // namespace remkit::csv
