#pragma once

#include <string>
#include <vector>

namespace trajmask {

// Entry point shared by the binary and in-process tests. Exit codes:
// 0 success, 1 internal error, 2 configuration/usage error.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

// Worker-thread cap from TRAJMASK_THREADS (default 1).
int worker_threads();

}  // namespace trajmask
