#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace posclip::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Output directory used when --out is not given.
inline constexpr const char* kOutDirEnv = "POSCLIP_OUT_DIR";

/// Runs one CLI invocation. `args` excludes the program name. Output files are
/// written only after the whole subcommand succeeds.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace posclip::cli
