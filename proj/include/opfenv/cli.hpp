#pragma once

#include <string>
#include <vector>

namespace opfenv::cli {

/// Entry point behind main(). Returns the process exit code:
/// 0 success, 2 config/validation error, 3 training divergence, 1 other.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace opfenv::cli
