#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace besov::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kConfigError = 2 };

/// Runs the `besov` command line. Machine-readable output goes to `out`,
/// diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace besov::cli
