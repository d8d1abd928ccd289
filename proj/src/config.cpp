#include "dbgi/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dbgi/raster.hpp"

namespace dbgi {

using nlohmann::json;

void DataConfig::validate() const {
    if (source != "synthetic" && source != "inkml" && source != "cache")
        throw ContractViolation("data.source must be synthetic, inkml, or cache");
    if (source == "synthetic" && synthetic_count < 1)
        throw ContractViolation("data.synthetic_count must be >= 1");
    if (source == "inkml" && inkml_dir.empty())
        throw ContractViolation("data.inkml_dir required for source=inkml");
    if (source == "cache" && cache_dir.empty())
        throw ContractViolation("data.cache_dir required for source=cache");
    if (grammar_depth < 0) throw ContractViolation("data.grammar_depth must be >= 0");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ContractViolation("data.val_fraction must be in [0, 1)");
    RasterConfig{target_height, stroke_width}.validate();
}

void ExperimentConfig::validate() const {
    if (max_decode_len < 1) throw ContractViolation("max_decode_len must be >= 1");
    if (beam_width < 0) throw ContractViolation("beam_width must be >= 0");
    model.validate();
    train.validate();
    data.validate();
}

namespace {

// Reads known keys out of one JSON object and rejects everything else.
class StrictObject {
public:
    StrictObject(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ContractViolation("config: " + path_ + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!node_.contains(key)) return;
        try {
            out = node_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ContractViolation("config: bad value for " + path_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return node_.contains(key) ? &node_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [key, value] : node_.items())
            if (!seen_.count(key))
                throw ContractViolation("config: unknown key " + path_ + "." + key);
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

EncoderConfig encoder_from_json(const json& node) {
    EncoderConfig c;
    StrictObject obj(node, "encoder");
    obj.get("stem_channels", c.stem_channels);
    obj.get("growth_rate", c.growth_rate);
    std::vector<int> layers = {c.layers_per_block[0], c.layers_per_block[1], c.layers_per_block[2]};
    obj.get("layers_per_block", layers);
    if (layers.size() != 3)
        throw ContractViolation("config: encoder.layers_per_block must have 3 entries");
    c.layers_per_block = {layers[0], layers[1], layers[2]};
    std::vector<int> bam(c.bam_after.begin(), c.bam_after.end());
    obj.get("bam_after", bam);
    c.bam_after = std::set<int>(bam.begin(), bam.end());
    obj.get("reduction_ratio", c.reduction_ratio);
    obj.get("spatial_dilation", c.spatial_dilation);
    obj.get("transition_compression", c.transition_compression);
    obj.get("bam_pre_transition", c.bam_pre_transition);
    obj.get("transition_after_block3", c.transition_after_block3);
    obj.finish();
    return c;
}

json encoder_to_json(const EncoderConfig& c) {
    return {{"stem_channels", c.stem_channels},
            {"growth_rate", c.growth_rate},
            {"layers_per_block", {c.layers_per_block[0], c.layers_per_block[1], c.layers_per_block[2]}},
            {"bam_after", std::vector<int>(c.bam_after.begin(), c.bam_after.end())},
            {"reduction_ratio", c.reduction_ratio},
            {"spatial_dilation", c.spatial_dilation},
            {"transition_compression", c.transition_compression},
            {"bam_pre_transition", c.bam_pre_transition},
            {"transition_after_block3", c.transition_after_block3}};
}

AttentionConfig attention_from_json(const json& node) {
    AttentionConfig c;
    StrictObject obj(node, "attention");
    obj.get("dim", c.dim);
    obj.get("coverage_channels", c.coverage_channels);
    obj.get("coverage_kernel", c.coverage_kernel);
    obj.finish();
    return c;
}

json attention_to_json(const AttentionConfig& c) {
    return {{"dim", c.dim},
            {"coverage_channels", c.coverage_channels},
            {"coverage_kernel", c.coverage_kernel}};
}

DecoderConfig decoder_from_json(const json& node) {
    DecoderConfig c;
    StrictObject obj(node, "decoder");
    std::string cell = "gi_gru";
    obj.get("cell", cell);
    if (cell == "gru")
        c.cell = CellKind::gru;
    else if (cell == "gi_gru")
        c.cell = CellKind::gi_gru;
    else
        throw ContractViolation("config: decoder.cell must be gru or gi_gru");
    obj.get("hidden", c.hidden);
    obj.get("embedding", c.embedding);
    obj.get("proj", c.proj);
    obj.get("step_size", c.step_size);
    obj.get("learnable_step", c.learnable_step);
    obj.get("recompute_level2_aux", c.recompute_level2_aux);
    obj.finish();
    return c;
}

json decoder_to_json(const DecoderConfig& c) {
    return {{"cell", c.cell == CellKind::gru ? "gru" : "gi_gru"},
            {"hidden", c.hidden},
            {"embedding", c.embedding},
            {"proj", c.proj},
            {"step_size", c.step_size},
            {"learnable_step", c.learnable_step},
            {"recompute_level2_aux", c.recompute_level2_aux}};
}

TrainConfig train_from_json(const json& node) {
    TrainConfig c;
    StrictObject obj(node, "train");
    obj.get("lr", c.lr);
    obj.get("momentum", c.momentum);
    obj.get("lambda_l2", c.lambda_l2);
    obj.get("max_epochs", c.max_epochs);
    obj.get("plateau_patience", c.plateau_patience);
    obj.get("lr_decay_factor", c.lr_decay_factor);
    obj.get("batch_size", c.batch_size);
    obj.get("clip_norm", c.clip_norm);
    obj.get("clip_enabled", c.clip_enabled);
    obj.get("l2_all_parameters", c.l2_all_parameters);
    obj.finish();
    return c;
}

json train_to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"momentum", c.momentum},
            {"lambda_l2", c.lambda_l2},
            {"max_epochs", c.max_epochs},
            {"plateau_patience", c.plateau_patience},
            {"lr_decay_factor", c.lr_decay_factor},
            {"batch_size", c.batch_size},
            {"clip_norm", c.clip_norm},
            {"clip_enabled", c.clip_enabled},
            {"l2_all_parameters", c.l2_all_parameters}};
}

DataConfig data_from_json(const json& node) {
    DataConfig c;
    StrictObject obj(node, "data");
    obj.get("source", c.source);
    obj.get("synthetic_count", c.synthetic_count);
    obj.get("grammar_depth", c.grammar_depth);
    obj.get("inkml_dir", c.inkml_dir);
    obj.get("cache_dir", c.cache_dir);
    obj.get("target_height", c.target_height);
    obj.get("stroke_width", c.stroke_width);
    obj.get("val_fraction", c.val_fraction);
    obj.finish();
    return c;
}

json data_to_json(const DataConfig& c) {
    return {{"source", c.source},
            {"synthetic_count", c.synthetic_count},
            {"grammar_depth", c.grammar_depth},
            {"inkml_dir", c.inkml_dir},
            {"cache_dir", c.cache_dir},
            {"target_height", c.target_height},
            {"stroke_width", c.stroke_width},
            {"val_fraction", c.val_fraction}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    StrictObject obj(j, "config");
    obj.get("seed", c.seed);
    obj.get("output_dir", c.output_dir);
    obj.get("max_decode_len", c.max_decode_len);
    obj.get("beam_width", c.beam_width);
    obj.get("warm_start", c.warm_start);
    if (const json* node = obj.child("encoder")) c.model.encoder = encoder_from_json(*node);
    if (const json* node = obj.child("attention")) c.model.attention = attention_from_json(*node);
    if (const json* node = obj.child("decoder")) c.model.decoder = decoder_from_json(*node);
    if (const json* node = obj.child("train")) c.train = train_from_json(*node);
    if (const json* node = obj.child("data")) c.data = data_from_json(*node);
    obj.finish();
    c.train.seed = c.seed;  // one root seed drives everything
    c.validate();
    return c;
}

json ExperimentConfig::to_json() const {
    return {{"seed", seed},
            {"output_dir", output_dir},
            {"max_decode_len", max_decode_len},
            {"beam_width", beam_width},
            {"warm_start", warm_start},
            {"encoder", encoder_to_json(model.encoder)},
            {"attention", attention_to_json(model.attention)},
            {"decoder", decoder_to_json(model.decoder)},
            {"train", train_to_json(train)},
            {"data", data_to_json(data)}};
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ContractViolation(std::string("config: invalid JSON: ") + e.what());
    }
    return from_json(j);
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    return parse(buffer.str());
}

std::string ExperimentConfig::serialize() const { return to_json().dump(2) + "\n"; }

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ContractViolation("--set expects KEY=VALUE, got: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // unquoted strings pass through
    }

    json* node = &config;
    std::size_t begin = 0;
    while (true) {
        const auto dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
        if (key.empty()) throw ContractViolation("--set has an empty path segment: " + assignment);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        begin = dot + 1;
    }
}

}  // namespace dbgi
