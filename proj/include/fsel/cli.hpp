#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fsel::cli {

/// Stable exit codes.
enum ExitCode : int {
    kOk = 0,
    kDataViolation = 1,
    kUsageOrIo = 2,
};

/// Runs the command line `args` (args[0] is the program name). Diagnostics,
/// progress and reports go to `err`; command output goes to files, or to
/// `out` when a command is asked to write to "-".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fsel::cli
