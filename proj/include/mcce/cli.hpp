#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mcce::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,  // configuration, usage or I/O problem
    kInitFailed = 2,
    kLogParse = 3,
    kMismatch = 4,
};

/// Runs one command line (args[0] is the program name). Diagnostics go to err.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mcce::cli
