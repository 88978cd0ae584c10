#pragma once

#include <string>
#include <vector>

namespace a3gan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `a3gan` tool. Subcommands: synth-data, train, generate,
/// eval, wpt, ablate. Prints a one-line reason on failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace a3gan::cli
