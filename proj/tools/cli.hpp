#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sparsedet::cli {

// Exit statuses. Every nonzero status comes with a one-line JSON error
// record on the error stream.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Runs one command line; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sparsedet::cli
