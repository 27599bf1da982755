#pragma once

#include <string>
#include <vector>

namespace pathogan::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfigInvalid = 2,
    kMissingDependency = 3,
    kArtifactExists = 4,
};

// Parses and runs one command line (args[0] is the program name).
int run(const std::vector<std::string>& args);

}  // namespace pathogan::cli
