#include "geosdg/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "geosdg/error.hpp"
#include "geosdg/io.hpp"

namespace geosdg::csv {

namespace {

std::string where(const Table& t, std::size_t row, std::size_t col) {
  return t.source + " row " + std::to_string(t.lines.at(row)) + " column '" + t.header.at(col) + "'";
}

}  // namespace

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

Table parse(std::string_view text, const std::string& source, const std::vector<std::string>& expected) {
  Table t;
  t.source = source;
  std::size_t line_no = 0, pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split(line);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      if (!expected.empty() && t.header != expected) {
        throw FormatError(source + ": header mismatch, expected '" + join(expected) + "', got '" + std::string(line) +
                          "'");
      }
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw FormatError(source + " row " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(line_no);
  }
  if (!have_header) throw FormatError(source + ": empty file, no header");
  return t;
}

Table read(const std::filesystem::path& path, const std::vector<std::string>& expected) {
  return parse(io::read_file(path), path.string(), expected);
}

void require_header_prefix(const Table& t, const std::vector<std::string>& prefix) {
  if (t.header.size() < prefix.size() || !std::equal(prefix.begin(), prefix.end(), t.header.begin())) {
    throw FormatError(t.source + ": header must start with '" + join(prefix) + "'");
  }
}

double to_double(const Table& t, std::size_t row, std::size_t col) {
  const auto& s = t.rows.at(row).at(col);
  double v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) {
    throw FormatError(where(t, row, col) + ": not a finite number: '" + s + "'");
  }
  return v;
}

float to_float(const Table& t, std::size_t row, std::size_t col) {
  const auto& s = t.rows.at(row).at(col);
  float v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) {
    throw FormatError(where(t, row, col) + ": not a finite number: '" + s + "'");
  }
  return v;
}

std::optional<double> to_optional_double(const Table& t, std::size_t row, std::size_t col) {
  if (t.rows.at(row).at(col).empty()) return std::nullopt;
  return to_double(t, row, col);
}

std::int64_t to_int(const Table& t, std::size_t row, std::size_t col) {
  const auto& s = t.rows.at(row).at(col);
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw FormatError(where(t, row, col) + ": not an integer: '" + s + "'");
  return v;
}

bool to_bool01(const Table& t, std::size_t row, std::size_t col) {
  const auto& s = t.rows.at(row).at(col);
  if (s == "0") return false;
  if (s == "1") return true;
  throw FormatError(where(t, row, col) + ": expected 0 or 1, got '" + s + "'");
}

std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string shortest(float v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fixed(double v, int digits) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  std::string s(buf, p);
  if (s.starts_with("-") && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string fixed2(double v) { return fixed(v, 2); }

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

}  // namespace geosdg::csv
