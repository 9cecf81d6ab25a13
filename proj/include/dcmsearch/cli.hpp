#pragma once

#include <string>
#include <vector>

namespace dcmsearch {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 2;
inline constexpr int kExitAbort = 3;

/// Entry point for the `dcmsearch` tool (simulate, estimate, search, report).
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace dcmsearch
