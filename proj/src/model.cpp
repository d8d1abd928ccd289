#include "dbgi/model.hpp"

namespace dbgi {

Model::Model(const ModelConfig& config, std::int64_t vocab_size, int start_token, int end_token,
             std::uint64_t seed)
    : store(seed), config_(config) {
    config.validate();
    encoder = std::make_unique<DenseBamEncoder>(store, config.encoder);
    const std::int64_t feature_dim = encoder->plan().final_channels;
    attention = AttentionWeights(store, "attention", config.attention, config.decoder.hidden,
                                 feature_dim);
    decoder = std::make_unique<Decoder>(store, config.decoder, vocab_size, start_token, end_token,
                                        feature_dim);
}

DecodeResult Model::decode_greedy(const Tensor& image, int max_len) const {
    NoGradGuard inference;
    FeatureGrid grid = encoder->forward(image, /*training=*/false);
    return decoder->greedy(grid, attention, max_len);
}

DecodeResult Model::decode_teacher_forced(const Tensor& image, const std::vector<int>& targets) const {
    FeatureGrid grid = encode(image);
    return decoder->teacher_forced(grid, attention, targets);
}

DecodeResult Model::decode_beam(const Tensor& image, int width, int max_len) const {
    NoGradGuard inference;
    FeatureGrid grid = encoder->forward(image, /*training=*/false);
    return decoder->beam(grid, attention, width, max_len);
}

}  // namespace dbgi
