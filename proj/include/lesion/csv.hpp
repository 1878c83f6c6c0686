#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lesion::csv {

/// Splits one line on commas. No quoting: every file written by this project
/// keeps fields free of commas and quotes.
std::vector<std::string> split(std::string_view line);

/// Reads all non-empty lines, stripping a trailing '\r'.
std::vector<std::vector<std::string>> read_rows(std::istream& is);

/// Parses a full-precision real; throws DataError naming `what` on failure.
double parse_real(const std::string& field, std::string_view what);

/// Shortest decimal text that round-trips to the same double.
std::string format_real(double v);

/// Fixed-point text with `decimals` digits.
std::string format_fixed(double v, int decimals);

}  // namespace lesion::csv
