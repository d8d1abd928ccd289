#pragma once

#include <string>

#include "dbgi/encoder.hpp"
#include "dbgi/params.hpp"
#include "dbgi/tensor.hpp"

namespace dbgi {

struct AttentionConfig {
    int dim = 128;               // d', energy space
    int coverage_channels = 64;  // q, coverage feature channels
    int coverage_kernel = 5;     // odd, spatial-extent preserving

    void validate() const;
};

struct AttentionWeights {
    Tensor nu;               // {d'}
    Tensor w_hidden;         // {d', n}
    Tensor w_annotation;     // {d', N'}
    Tensor w_coverage;       // {d', q}
    Tensor bias;             // {d'}
    Tensor coverage_kernel;  // {q, 1, kf, kf}

    AttentionWeights() = default;
    AttentionWeights(ParameterStore& store, const std::string& prefix, const AttentionConfig& config,
                     std::int64_t hidden_dim, std::int64_t feature_dim);
};

// Running attention history for one decode. beta accumulates every alpha
// emitted so far, starting from zeros.
struct AttentionState {
    Tensor beta;          // {1, 1, H, W}
    Tensor last_alpha;    // {L}
    Tensor last_context;  // {N'}

    static AttentionState initial(std::int64_t height, std::int64_t width);
};

struct AttentionOutput {
    Tensor context;  // {N'}
    Tensor alpha;    // {L}
    AttentionState state;
};

// Coverage-based additive attention. Energies combine the decoder's
// intermediate hidden state, each grid feature, and a learned convolution of
// the attention-sum map; weights come out of a softmax over all L positions.
AttentionOutput attend(const Tensor& hidden, const FeatureGrid& grid, const AttentionState& state,
                       const AttentionWeights& weights);

// One alpha map as an 8-bit P5 PGM, linearly scaled so the peak maps to 255.
void write_alpha_pgm(const std::string& path, const std::vector<double>& alpha,
                     std::int64_t height, std::int64_t width);

}  // namespace dbgi
