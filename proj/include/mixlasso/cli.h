#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mixlasso::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitWarning = 2;

/// Runs one command. `args` excludes the program name, e.g.
/// {"bench", "--replications", "1", "--seed", "7", "--out", "dir"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mixlasso::cli
