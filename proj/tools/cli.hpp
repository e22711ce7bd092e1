#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mfatlas::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInvalidModel = 1;
inline constexpr int kRuntimeError = 2;
inline constexpr int kCheckFailed = 3;
inline constexpr int kUsage = 64;

/// Runs one invocation; args excludes the program name. Never calls exit().
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mfatlas::cli
