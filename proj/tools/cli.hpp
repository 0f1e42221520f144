#pragma once

#include <string>
#include <vector>

namespace caforge::cli {

// Executes one command-line invocation (args excludes the program name) and
// returns the process exit code:
//   0  success
//   1  usage error (bad flags, unknown config keys, missing subcommand)
//   2  runtime or data error (missing files, malformed datasets, ...)
//   3  benchmark equivalence failure
int run_cli(std::vector<std::string> args);

}  // namespace caforge::cli
