#pragma once

// Minimal CSV for the fixed-header files this project reads and writes.
// Fields never contain commas, quotes or newlines, so no quoting is done.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace geosdg::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  ///< 1-based source line per row
  std::string source;
};

std::vector<std::string> split(std::string_view line);

/// Parses text; every row must have as many fields as the header. When
/// `expected` is non-empty the header must match it exactly.
Table parse(std::string_view text, const std::string& source, const std::vector<std::string>& expected = {});
Table read(const std::filesystem::path& path, const std::vector<std::string>& expected = {});

/// Header prefix match, for files with a variable tail (embedding columns).
void require_header_prefix(const Table& t, const std::vector<std::string>& prefix);

// Field parsers; errors are FormatError naming source, line and column.
double to_double(const Table& t, std::size_t row, std::size_t col);
float to_float(const Table& t, std::size_t row, std::size_t col);
std::optional<double> to_optional_double(const Table& t, std::size_t row, std::size_t col);
std::int64_t to_int(const Table& t, std::size_t row, std::size_t col);
bool to_bool01(const Table& t, std::size_t row, std::size_t col);

/// Shortest text that parses back to the same value.
std::string shortest(double v);
std::string shortest(float v);
/// Fixed two decimals, as used for percentages at the output boundary.
std::string fixed2(double v);
std::string fixed(double v, int digits);

std::string join(const std::vector<std::string>& fields);

}  // namespace geosdg::csv
