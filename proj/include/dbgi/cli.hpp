#pragma once

#include <string>
#include <vector>

#include "dbgi/config.hpp"

namespace dbgi::cli {

// Exit codes: 0 success, 1 contract violation, 2 I/O error.
constexpr int kOk = 0;
constexpr int kContractViolation = 1;
constexpr int kIoError = 2;

int cmd_train(const ExperimentConfig& config);
int cmd_eval(const ExperimentConfig& config, const std::string& checkpoint);
int cmd_ablate(const ExperimentConfig& config, const std::string& axis);
int cmd_gradcheck(std::uint64_t seed);
int cmd_attention_dump(const ExperimentConfig& config, const std::string& checkpoint,
                       int sample_index);

// Full argument parsing + dispatch; never throws.
int run(int argc, const char* const* argv);

}  // namespace dbgi::cli
