// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace drope::cli {

/// Runs the command line `args` (without the program name). Returns the
/// process exit code; parse errors print usage text to `err` and return 2.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace drope::cli
