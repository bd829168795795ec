#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace grpolab::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kFitFailure = 3,
};

/// Runs `grpo_lab <args...>` (args exclude the program name) and returns the
/// exit code. Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace grpolab::cli
