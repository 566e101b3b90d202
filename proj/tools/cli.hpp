#pragma once

#include <iosfwd>

namespace adaptcar::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsage = 2,
  kParse = 3,
  kModel = 4,
  kNumerical = 5,
};

/// Runs one command line (argv[0] is the program name). Human-readable
/// progress goes to `out`, diagnostics to `err`; artifacts go to --out-dir.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace adaptcar::cli
