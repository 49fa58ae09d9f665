#pragma once

// mgsim command-line front end. Kept as a library so tests can drive it
// in-process.

#include <iosfwd>
#include <string>
#include <vector>

namespace mgsim::cli {

enum ExitCode : int {
    kOk = 0,
    kConfig = 2,
    kNumerical = 3,
    kCertificate = 4,
};

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mgsim::cli
