#pragma once

// Minimal CSV reader: header row, comma separator, optional RFC-4180 quoting,
// UTF-8 bytes passed through, dot decimal enforced via std::from_chars.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "apx/common.hpp"

namespace apx {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline void split_csv_line(const std::string& line, std::vector<std::string>& out,
                           const std::string& where) {
  out.clear();
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  while (i <= line.size()) {
    if (i == line.size()) {
      require(!quoted, where + ": unterminated quoted field");
      out.push_back(field);
      break;
    }
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
    ++i;
  }
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open CSV file: " + path);
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && lineno > 1) continue;
    std::vector<std::string> fields;
    detail::split_csv_line(line, fields, path + ":" + std::to_string(lineno));
    if (lineno == 1) {
      table.header = std::move(fields);
    } else {
      require(fields.size() == table.header.size(),
              path + ":" + std::to_string(lineno) + ": expected " +
                  std::to_string(table.header.size()) + " fields, got " +
                  std::to_string(fields.size()));
      table.rows.push_back(std::move(fields));
    }
  }
  require(!table.header.empty(), path + ": missing header row");
  return table;
}

inline double parse_f64(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [p, ec] = std::from_chars(first, last, v);
  require(ec == std::errc() && p == last, where + ": not a float64: '" + s + "'");
  return v;
}

inline std::int64_t parse_i64(const std::string& s, const std::string& where) {
  std::int64_t v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [p, ec] = std::from_chars(first, last, v);
  require(ec == std::errc() && p == last, where + ": not an int64: '" + s + "'");
  return v;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace apx
