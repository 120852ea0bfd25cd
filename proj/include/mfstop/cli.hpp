#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mfstop {

const char* version() noexcept;

/// Exit statuses of the command-line front end.
enum ExitStatus : int { exit_ok = 0, exit_usage = 1, exit_not_converged = 2 };

/// Runs one subcommand in-process. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mfstop
