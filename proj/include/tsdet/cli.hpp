#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tsdet::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kOk = 0, kDataError = 1, kUsageError = 2 };

/// Parses `args` (without the program name) and runs the subcommand.
/// Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker count from TSDETECT_THREADS (0 or unset = hardware concurrency).
unsigned thread_count();

}  // namespace tsdet::cli
