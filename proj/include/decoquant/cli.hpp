// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace decoquant::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,         // I/O or numerical failure not caused by the input
  kExitMalformed = 2,       // unreadable or inconsistent input file
  kExitInvalidParams = 3,   // bad flag values or configuration
  kExitUnknownCommand = 4,  // unknown subcommand or experiment
};

/// Runs one command line (without the program name). JSON summaries go to
/// `out`, diagnostics and --verbose tables to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace decoquant::cli
