#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace reformkit {

/// Exit statuses shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitBackend = 3 };

/// Runs the command line `args` (without the program name) writing to the given streams.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace reformkit
