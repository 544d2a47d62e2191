#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rowsurv::cli {

/// Process exit codes. Stable contract.
enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kInfeasible = 2,
  kNotConverged = 3,
  kInvalidInput = 4,
  kCoxFailure = 5,
  kSimulationFailures = 6,
};

/// Runs the tool with `args` (args[0] is the program name). Normal output goes
/// to `out`, diagnostics to `err`. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rowsurv::cli
