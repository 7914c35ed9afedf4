// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace pnoma::cli {

enum ExitCode : int {
    kOk = 0,
    kUsageError = 1,
    kDataError = 2,
    kNumericError = 3,
};

/// Parses `args` (without the program name) and runs one subcommand.
int run(const std::vector<std::string>& args);

}  // namespace pnoma::cli
