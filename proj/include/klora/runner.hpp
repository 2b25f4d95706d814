#pragma once

#include <string>

#include "klora/config.hpp"

namespace klora {

// Exit-code contract: 0 success, 2 usage/config error, 3 numerical
// divergence.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

int cmd_oracle(const Config& cfg, const std::string& out_dir);
int cmd_train(const Config& cfg, const std::string& out_dir);
int cmd_eval(const Config& cfg, const std::string& out_dir);

// Full CLI: koopman-lora oracle|train|eval --config <path> [--out <dir>]
// [--jobs n] [--seed k].
int run_cli(int argc, char** argv);

} // namespace klora
