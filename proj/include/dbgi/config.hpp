#pragma once

#include <string>

#include <json.hpp>

#include "dbgi/model.hpp"
#include "dbgi/train.hpp"

namespace dbgi {

struct DataConfig {
    std::string source = "synthetic";  // synthetic | inkml | cache
    int synthetic_count = 100;
    int grammar_depth = 2;
    std::string inkml_dir;
    std::string cache_dir;
    int target_height = 64;
    int stroke_width = 2;
    double val_fraction = 0.1;

    void validate() const;
};

// The one experiment file: everything a run needs, validated up front.
// Unknown keys are rejected so typos fail loudly before any compute.
struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::string output_dir = "out";
    int max_decode_len = 40;
    int beam_width = 0;  // 0 = greedy
    std::string warm_start;
    ModelConfig model;
    TrainConfig train;
    DataConfig data;

    void validate() const;

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    std::string serialize() const;  // canonical: all fields, 2-space indent
};

// Applies one dotted-path override ("train.lr=0.001"). Values parse as JSON
// when possible, otherwise as strings.
void apply_override(nlohmann::json& config, const std::string& assignment);

}  // namespace dbgi
