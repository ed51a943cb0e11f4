#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nftk::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitModuleError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand. `args` excludes the program name. Failures print a
/// one-line JSON record {"error":{"code":...,"message":...}} to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nftk::cli
