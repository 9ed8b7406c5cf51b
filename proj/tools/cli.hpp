#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace capsim::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2, kFit = 3 };

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace capsim::cli
