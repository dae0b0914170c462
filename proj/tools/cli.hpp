#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // internal error or replay mismatch
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;

// Runs one `wcl` invocation; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wcl::cli
