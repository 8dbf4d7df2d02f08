#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace protomil::cli {

// Runs the protomil command line (args excludes the program name).
// Exit codes: 0 success, 1 data or training failure, 2 usage/config error.
// Failures print one line "error: <reason>" to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace protomil::cli
