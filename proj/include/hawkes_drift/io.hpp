#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hawkes_drift {

/// Round-trip decimal form (17 significant digits).
[[nodiscard]] std::string format_double(double value);

/// Splits one CSV line on commas; no quoting support.
[[nodiscard]] std::vector<std::string> split_csv_line(std::string_view line);

[[nodiscard]] double parse_double(const std::string& field);

} // namespace hawkes_drift
