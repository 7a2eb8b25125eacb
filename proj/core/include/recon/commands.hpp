#pragma once

#include <string>

#include "recon/config.hpp"

namespace recon {

// Exit codes: 0 ok, 2 config error, 3 IO error, 4 training divergence,
// 5 sampler non-finite state.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitNonFinite = 5;

int exit_code_for(ErrorKind kind);

// Dispatches one CLI command ("gen-data", "train", "reconstruct", "evaluate",
// "benchmark"); catches recon errors and maps them to exit codes, printing
// the message to stderr.
int run_command(const std::string& command, RunConfig& cfg);

}  // namespace recon
