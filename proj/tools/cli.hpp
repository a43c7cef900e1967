#pragma once

#include <string>
#include <vector>

namespace cdcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Runs one subcommand. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args);

}  // namespace cdcl::cli
