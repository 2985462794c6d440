#pragma once

#include <ostream>

namespace rnnlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;      // bad arguments, config, corpus or checkpoint
inline constexpr int kExitNumerical = 2;  // failed gradient check or unrecoverable divergence

/// Entry point of the `rnnlab` tool with its streams injected, so tests can
/// drive every subcommand in-process.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rnnlab
