#pragma once

// Command-line front end. Exit codes:
//   0 success, 2 invalid configuration or input, 3 accuracy/convergence flag
//   or too few observations, 4 numerical failure, 5 verification failure.

#include <iosfwd>

namespace cvp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitFlagged = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitVerifyFailed = 5;

/// Runs one command. Data goes to `out` (or the --out file), diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cvp::cli
