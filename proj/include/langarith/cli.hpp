// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace langarith {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitEvaluator = 3,
};

/// Runs one CLI invocation. `args` excludes the program name.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

} // namespace langarith
