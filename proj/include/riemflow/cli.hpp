#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace riemflow::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitNotConverged = 4;
inline constexpr int kExitBenchmarkFailed = 5;

/// Runs the riemflow command line; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace riemflow::cli
