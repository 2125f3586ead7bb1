#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace borderlab::cli {

/// Exit codes: 0 success, 1 runtime or estimator failure, 2 usage or config error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the `borderlab` binary; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace borderlab::cli
