#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "glytwin/error.hpp"

namespace glytwin::csv {

// Shortest representation that round-trips exactly.
inline std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error(ErrorCode::InvalidArgument, "unformattable number");
  return std::string(buf, ptr);
}

inline double parse_number(std::string_view field, std::string_view column) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::SchemaMismatch,
                "column '" + std::string(column) + "': not a number '" + std::string(field) + "'");
  }
  return v;
}

inline std::vector<std::string> split_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline Table read(std::istream& in, std::string_view expected_header = {}) {
  Table table;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, "empty CSV input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (!expected_header.empty() && line != expected_header) {
    throw Error(ErrorCode::SchemaMismatch,
                "unexpected CSV header '" + line + "', expected '" + std::string(expected_header) + "'");
  }
  table.header = split_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size()) {
      throw Error(ErrorCode::SchemaMismatch, "line " + std::to_string(lineno) + ": expected " +
                                                 std::to_string(table.header.size()) + " fields, got " +
                                                 std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  return table;
}

inline Table read_file(const std::string& path, std::string_view expected_header = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return read(in, expected_header);
}

}  // namespace glytwin::csv
