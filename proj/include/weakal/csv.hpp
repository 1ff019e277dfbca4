#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace weakal::csv {

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

/// Strict full-field parse; nullopt on anything but a complete number.
std::optional<double> parse_double(std::string_view text);

/// Splits one line on commas; strips a trailing '\r'. No quoting.
std::vector<std::string> split_line(std::string_view line);

std::string trim(std::string_view text);

}  // namespace weakal::csv
