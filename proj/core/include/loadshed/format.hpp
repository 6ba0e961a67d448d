#pragma once

#include <string>
#include <string_view>

namespace loadshed {

/// Shortest text that parses back to exactly the same double. Non-finite
/// values print as "nan", "inf", "-inf".
std::string format_double(double value);

/// Parses a full token as a double (accepts "nan", "inf", "Inf", leading '+').
/// Throws SchemaError when the token is not a number.
double parse_double(std::string_view token);

}  // namespace loadshed
