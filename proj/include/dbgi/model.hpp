#pragma once

#include <cstdint>
#include <memory>

#include "dbgi/attention.hpp"
#include "dbgi/decoder.hpp"
#include "dbgi/encoder.hpp"
#include "dbgi/params.hpp"

namespace dbgi {

struct ModelConfig {
    EncoderConfig encoder;
    AttentionConfig attention;
    DecoderConfig decoder;

    void validate() const {
        encoder.validate();
        attention.validate();
        decoder.validate();
    }
};

// Full encoder-decoder with all weights in one store. Weight initialization
// is a pure function of the seed and the configuration.
class Model {
public:
    Model(const ModelConfig& config, std::int64_t vocab_size, int start_token, int end_token,
          std::uint64_t seed);

    FeatureGrid encode(const Tensor& image) const { return encoder->forward(image, training_); }

    DecodeResult decode_greedy(const Tensor& image, int max_len) const;
    DecodeResult decode_teacher_forced(const Tensor& image, const std::vector<int>& targets) const;
    DecodeResult decode_beam(const Tensor& image, int width, int max_len) const;

    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

    const ModelConfig& config() const { return config_; }

    ParameterStore store;
    std::unique_ptr<DenseBamEncoder> encoder;
    AttentionWeights attention;
    std::unique_ptr<Decoder> decoder;

private:
    ModelConfig config_;
    bool training_ = true;
};

}  // namespace dbgi
