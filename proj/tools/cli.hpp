#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace collapse_lab::cli {

enum ExitCode : int { kOk = 0, kIoError = 1, kDegenerate = 2, kVerifyFailed = 3 };

/// Runs one command. args excludes the program name. Normal output goes to
/// out (or the --out file), diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace collapse_lab::cli
