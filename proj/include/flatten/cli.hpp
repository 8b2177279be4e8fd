#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flatten::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation, metric or any library error
inline constexpr int kExitUsage = 2;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "FLATTEN_OUT_DIR";

/// Runs the command line `args` (without the program name). Messages go to
/// `out`/`err`; the return value is the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flatten::cli
