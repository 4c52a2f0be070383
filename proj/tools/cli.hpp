#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace hcd::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 bad command line.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the `hcd` executable. `args` excludes the program
/// name. Failures print one line "error: <category>: <message>" to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace hcd::cli
