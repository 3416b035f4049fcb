#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tvflcm {

/// Shortest decimal text that round-trips to the same double (at most 17
/// significant digits). "inf"/"-inf"/"nan" for non-finite values.
std::string format_double(double v);

/// Strict parse of a whole field; returns false on junk or trailing text.
bool parse_double(std::string_view text, double& out);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

std::string_view trim(std::string_view s);

}  // namespace tvflcm
