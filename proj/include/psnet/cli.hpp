#pragma once

#include <exception>
#include <ostream>
#include <string>
#include <vector>

namespace psnet {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1, // runtime failure or failed check
  kExitConfig = 2,
  kExitData = 3,
};

/// Maps an exception to its exit code: ConfigError -> 2, DataError -> 3, otherwise 1.
int exit_code_for(const std::exception& e);

/// Entry point behind the `psnet` executable. args excludes the program name.
/// Subcommands: train, eval, params, compare, gradcheck.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace psnet
