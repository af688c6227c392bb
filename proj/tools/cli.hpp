#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sysid::cli {

enum ExitCode { ok = 0, training_failure = 1, usage_failure = 2 };

/// Runs one command line (args[0] is the program name). Reports go to files or `out`,
/// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace sysid::cli
