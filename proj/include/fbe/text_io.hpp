#pragma once

// Small helpers shared by the line-oriented file formats.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fbe/errors.hpp"

namespace fbe {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw FormatError("cannot format floating-point value");
  return std::string(buf, ptr);
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i == line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError(where + ": expected a number, got '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_uint(std::string_view s, const std::string& where) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError(where + ": expected a non-negative integer, got '" + std::string(s) + "'");
  return v;
}

/// First line of every output file: "#<format> v<version> key=value ...".
struct FileHeader {
  std::string format;
  int version = 1;
  std::map<std::string, std::string> fields;

  std::string to_line() const {
    std::string s = "#" + format + " v" + std::to_string(version);
    for (const auto& [k, v] : fields) s += " " + k + "=" + v;
    return s;
  }

  const std::string& get(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw FormatError("#" + format + " header lacks field '" + key + "'");
    return it->second;
  }

  static FileHeader parse(const std::string& line, std::string_view expected_format,
                          int max_version, const std::string& where) {
    auto tokens = split_ws(line);
    if (tokens.size() < 2 || tokens[0].size() < 2 || tokens[0][0] != '#')
      throw FormatError(where + ": missing versioned header line");
    FileHeader h;
    h.format = std::string(tokens[0].substr(1));
    if (h.format != expected_format)
      throw FormatError(where + ": expected #" + std::string(expected_format) + " header, got #" +
                        h.format);
    if (tokens[1].size() < 2 || tokens[1][0] != 'v')
      throw FormatError(where + ": malformed version token '" + std::string(tokens[1]) + "'");
    h.version = static_cast<int>(parse_uint(tokens[1].substr(1), where));
    if (h.version < 1 || h.version > max_version)
      throw FormatError(where + ": unsupported " + h.format + " version " +
                        std::to_string(h.version));
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      auto eq = tokens[i].find('=');
      if (eq == std::string_view::npos)
        throw FormatError(where + ": malformed header field '" + std::string(tokens[i]) + "'");
      h.fields[std::string(tokens[i].substr(0, eq))] = std::string(tokens[i].substr(eq + 1));
    }
    return h;
  }
};

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open '" + path + "' for reading");
  return in;
}

inline std::string read_file(const std::string& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a temporary sibling then renames, so a failed run leaves no partial file.
inline void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LookupError("cannot open '" + tmp + "' for writing");
    out << content;
    if (!out) throw LookupError("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw LookupError("cannot move '" + tmp + "' to '" + path + "'");
}

inline bool has_whitespace(std::string_view s) {
  return s.find_first_of(" \t\r\n") != std::string_view::npos || s.empty();
}

}  // namespace fbe
