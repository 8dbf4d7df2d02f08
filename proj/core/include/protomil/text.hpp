#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace protomil {

// 17 significant digits; re-parses to the identical double.
std::string format_double(double value);

// Parses the full field as a double; throws DataError naming `what` on
// malformed or partial input. Non-finite values are accepted here and
// rejected by callers that require finiteness.
double parse_double(std::string_view field, std::string_view what);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

}  // namespace protomil
