#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace saloha::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kConvergence = 3, kVerifyFailed = 4 };

/// Runs the command line in-process; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "a:b:step" -> a, a + step, ..., up to b (inclusive within 1e-9 step).
std::vector<double> parse_range(const std::string& text);

}  // namespace saloha::cli
