#pragma once

#include <ostream>
#include <span>
#include <string>

namespace compmap {

// Exit statuses of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Runs one command line (args[0] is the program name). Reports go to files;
// `out` receives the report path and a one-line summary, `err` diagnostics.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace compmap
