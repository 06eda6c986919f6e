#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace svyexp {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitInternal = 3,
};

// Entry point of the `svyexp` tool. args[0] is the program name. Reports go
// to `out`, diagnostics to `err`; the return value is the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace svyexp
