#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dbgi/attention.hpp"
#include "dbgi/encoder.hpp"
#include "dbgi/params.hpp"
#include "dbgi/tensor.hpp"

namespace dbgi {

enum class CellKind { gru, gi_gru };

struct DecoderConfig {
    CellKind cell = CellKind::gi_gru;
    int hidden = 256;     // n
    int embedding = 128;  // E
    int proj = 128;       // w'
    double step_size = 1.0;  // s, fixed unless learnable_step
    bool learnable_step = false;
    // Level 2 normally consumes level 1's auxiliary state unchanged; this
    // stub lets it recompute one from the context instead.
    bool recompute_level2_aux = false;

    void validate() const;
};

// Gate weights of one recurrent cell. The auxiliary input path (w_aux,
// step_size) exists only for gated-input cells; a plain GRU leaves w_aux
// undefined. Context matrices are always present and receive a zero vector
// when the level has no context input.
struct GruCellWeights {
    Tensor w_update, w_reset, w_cand;  // {n, in}
    Tensor u_update, u_reset, u_cand;  // {n, n}
    Tensor c_update, c_reset, c_cand;  // {n, N'}
    Tensor b_update, b_reset, b_cand;  // {n}
    Tensor w_aux;                      // {n, in}; undefined for plain GRU
    double step_size = 0.0;
    Tensor step_param;                 // rank-0; defined when the step size is learned

    GruCellWeights() = default;
    GruCellWeights(ParameterStore& store, const std::string& prefix, std::int64_t input_dim,
                   std::int64_t hidden_dim, std::int64_t context_dim, bool with_aux,
                   double step_size, bool learnable_step);

    std::int64_t hidden_dim() const { return b_update.dim(0); }
    Tensor aux_from_input(const Tensor& x) const;  // s (x) (W_v x)
};

// z = sig(Wx + Uh + Cc + b); r likewise; cand = tanh(Wx + r(x)(Uh) + Cc + b);
// h = (1-z)(x)h_prev + z(x)cand.
Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const Tensor& context,
                const GruCellWeights& w);

struct GiGruOutput {
    Tensor h;
    Tensor v;
};

// Gated-input variant: an auxiliary state v (given, or s (x) (W_v x)) joins
// both gates and the candidate's recurrent term; v passes through unchanged.
GiGruOutput gi_gru_cell(const Tensor& x, const Tensor& h_prev, const std::optional<Tensor>& v_in,
                        const Tensor& context, const GruCellWeights& w);

struct OutputProjection {
    Tensor w_out;      // {K, w'}
    Tensor v_hidden;   // {w', n}
    Tensor w_context;  // {w', N'}
    Tensor w_embed;    // {w', E}
    Tensor embedding;  // {K, E}

    OutputProjection() = default;
    OutputProjection(ParameterStore& store, const std::string& prefix, std::int64_t vocab,
                     std::int64_t proj, std::int64_t hidden, std::int64_t feature_dim,
                     std::int64_t embed_dim);
};

struct DecoderState {
    Tensor h1, h2, v;

    static DecoderState initial(std::int64_t hidden_dim);
};

struct StepResult {
    Tensor probabilities;  // {K}
    DecoderState state;
    AttentionState attention;
    Tensor alpha;
};

struct DecodeResult {
    std::vector<int> tokens;                  // body only, no start/end markers
    std::vector<Tensor> step_probabilities;   // teacher-forced: one per label
    std::vector<std::vector<double>> alphas;  // one map per emitted step
    bool truncated = false;
};

// Two-level stacked recurrent decoder. Level 1 turns the previous token's
// embedding and the running hidden state into an intermediate state that
// drives attention; level 2 folds the resulting context back in. With
// gated-input cells the level-1 auxiliary state is handed to level 2.
class Decoder {
public:
    Decoder(ParameterStore& store, const DecoderConfig& config, std::int64_t vocab_size,
            int start_token, int end_token, std::int64_t feature_dim);

    StepResult step(int prev_token, const DecoderState& state, const FeatureGrid& grid,
                    const AttentionState& attn_state, const AttentionWeights& attn) const;

    DecodeResult greedy(const FeatureGrid& grid, const AttentionWeights& attn, int max_len) const;
    DecodeResult teacher_forced(const FeatureGrid& grid, const AttentionWeights& attn,
                                const std::vector<int>& targets) const;
    DecodeResult beam(const FeatureGrid& grid, const AttentionWeights& attn, int width,
                      int max_len) const;

    const DecoderConfig& config() const { return config_; }
    std::int64_t vocab_size() const { return vocab_size_; }
    int start_token() const { return start_; }
    int end_token() const { return end_; }

    GruCellWeights level1, level2;
    OutputProjection projection;

private:
    DecoderConfig config_;
    std::int64_t vocab_size_ = 0;
    int start_ = 0;
    int end_ = 0;
    std::int64_t feature_dim_ = 0;
};

}  // namespace dbgi
