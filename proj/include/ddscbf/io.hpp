#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ddscbf/core.hpp"

namespace ddscbf::io {

/// Shortest-safe decimal form: 17 significant digits round-trips any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join(const Vector& v, char sep = ' ') {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += format_double(v[i]);
  }
  return out;
}

inline double parse_double(const std::string& token, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw ParseError("bad number '" + token + "'", line);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("bad number '" + token + "'", line);
  }
}

inline long long parse_int(const std::string& token, std::size_t line) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(token, &used);
    if (used != token.size()) throw ParseError("bad integer '" + token + "'", line);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("bad integer '" + token + "'", line);
  }
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> tokens;
  for (std::string t; in >> t;) tokens.push_back(t);
  return tokens;
}

/// Line reader that tracks 1-based line numbers for ParseError.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    return true;
  }

  std::vector<std::string> expect_tokens(const std::string& what) {
    std::string line;
    if (!next(line)) throw ParseError("unexpected end of file, expected " + what, line_no_ + 1);
    return split_ws(line);
  }

  [[nodiscard]] std::size_t line() const noexcept { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return in;
}

}  // namespace ddscbf::io
