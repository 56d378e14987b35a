#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pdanet::cli {

/// Runs one command line (args exclude the program name). Returns the process
/// exit code; normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pdanet::cli
