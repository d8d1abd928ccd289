#include "dbgi/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace dbgi {

void DecoderConfig::validate() const {
    if (hidden < 1 || embedding < 1 || proj < 1)
        throw ContractViolation("decoder: hidden/embedding/proj dims must be >= 1");
    if (step_size < 0.0) throw ContractViolation("decoder: step_size must be nonnegative");
}

GruCellWeights::GruCellWeights(ParameterStore& store, const std::string& prefix,
                               std::int64_t input_dim, std::int64_t hidden_dim,
                               std::int64_t context_dim, bool with_aux, double step_size,
                               bool learnable_step)
    : step_size(step_size) {
    w_update = store.add(prefix + ".w_update", {hidden_dim, input_dim}, Init::glorot_uniform, true);
    w_reset = store.add(prefix + ".w_reset", {hidden_dim, input_dim}, Init::glorot_uniform, true);
    w_cand = store.add(prefix + ".w_cand", {hidden_dim, input_dim}, Init::glorot_uniform, true);
    u_update = store.add(prefix + ".u_update", {hidden_dim, hidden_dim}, Init::glorot_uniform, true);
    u_reset = store.add(prefix + ".u_reset", {hidden_dim, hidden_dim}, Init::glorot_uniform, true);
    u_cand = store.add(prefix + ".u_cand", {hidden_dim, hidden_dim}, Init::glorot_uniform, true);
    c_update = store.add(prefix + ".c_update", {hidden_dim, context_dim}, Init::glorot_uniform, true);
    c_reset = store.add(prefix + ".c_reset", {hidden_dim, context_dim}, Init::glorot_uniform, true);
    c_cand = store.add(prefix + ".c_cand", {hidden_dim, context_dim}, Init::glorot_uniform, true);
    b_update = store.add(prefix + ".b_update", {hidden_dim}, Init::zeros, false);
    b_reset = store.add(prefix + ".b_reset", {hidden_dim}, Init::zeros, false);
    b_cand = store.add(prefix + ".b_cand", {hidden_dim}, Init::zeros, false);
    if (with_aux) {
        w_aux = store.add(prefix + ".w_aux", {hidden_dim, input_dim}, Init::glorot_uniform, true);
        if (learnable_step) step_param = store.add(prefix + ".step", {}, Init::zeros, false);
    }
    if (step_param.defined()) step_param.data()[0] = step_size;
}

Tensor GruCellWeights::aux_from_input(const Tensor& x) const {
    if (!w_aux.defined()) throw ContractViolation("cell has no auxiliary input path");
    Tensor projected = matmul(w_aux, x);
    return step_param.defined() ? mul(step_param, projected) : scale(projected, step_size);
}

namespace {

void check_cell_shapes(const Tensor& x, const Tensor& h_prev, const Tensor& context,
                       const GruCellWeights& w) {
    if (x.rank() != 1 || x.dim(0) != w.w_update.dim(1))
        throw ContractViolation("cell input has shape " + shape_str(x.shape()) + ", expected {" +
                                std::to_string(w.w_update.dim(1)) + "}");
    if (h_prev.rank() != 1 || h_prev.dim(0) != w.hidden_dim())
        throw ContractViolation("cell hidden state has shape " + shape_str(h_prev.shape()) +
                                ", expected {" + std::to_string(w.hidden_dim()) + "}");
    if (context.rank() != 1 || context.dim(0) != w.c_update.dim(1))
        throw ContractViolation("cell context has shape " + shape_str(context.shape()) +
                                ", expected {" + std::to_string(w.c_update.dim(1)) + "}");
}

}  // namespace

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const Tensor& context,
                const GruCellWeights& w) {
    check_cell_shapes(x, h_prev, context, w);
    Tensor z = sigmoid(add(add(add(matmul(w.w_update, x), matmul(w.u_update, h_prev)),
                               matmul(w.c_update, context)),
                           w.b_update));
    Tensor r = sigmoid(add(add(add(matmul(w.w_reset, x), matmul(w.u_reset, h_prev)),
                               matmul(w.c_reset, context)),
                           w.b_reset));
    Tensor cand = dbgi::tanh(add(add(add(matmul(w.w_cand, x), mul(r, matmul(w.u_cand, h_prev))),
                                     matmul(w.c_cand, context)),
                                 w.b_cand));
    return add(mul(sub(Tensor::full({w.hidden_dim()}, 1.0), z), h_prev), mul(z, cand));
}

GiGruOutput gi_gru_cell(const Tensor& x, const Tensor& h_prev, const std::optional<Tensor>& v_in,
                        const Tensor& context, const GruCellWeights& w) {
    check_cell_shapes(x, h_prev, context, w);
    Tensor v = v_in ? *v_in : w.aux_from_input(x);
    if (v.rank() != 1 || v.dim(0) != w.hidden_dim())
        throw ContractViolation("auxiliary state has shape " + shape_str(v.shape()) + ", expected {" +
                                std::to_string(w.hidden_dim()) + "}");
    Tensor z = sigmoid(add(add(add(add(matmul(w.w_update, x), matmul(w.u_update, h_prev)), v),
                               matmul(w.c_update, context)),
                           w.b_update));
    Tensor r = sigmoid(add(add(add(add(matmul(w.w_reset, x), matmul(w.u_reset, h_prev)), v),
                               matmul(w.c_reset, context)),
                           w.b_reset));
    Tensor cand = dbgi::tanh(add(add(add(matmul(w.w_cand, x),
                                         mul(r, add(matmul(w.u_cand, h_prev), v))),
                                     matmul(w.c_cand, context)),
                                 w.b_cand));
    Tensor h = add(mul(sub(Tensor::full({w.hidden_dim()}, 1.0), z), h_prev), mul(z, cand));
    return {h, v};
}

OutputProjection::OutputProjection(ParameterStore& store, const std::string& prefix,
                                   std::int64_t vocab, std::int64_t proj, std::int64_t hidden,
                                   std::int64_t feature_dim, std::int64_t embed_dim) {
    w_out = store.add(prefix + ".w_out", {vocab, proj}, Init::glorot_uniform, true);
    v_hidden = store.add(prefix + ".v_hidden", {proj, hidden}, Init::glorot_uniform, true);
    w_context = store.add(prefix + ".w_context", {proj, feature_dim}, Init::glorot_uniform, true);
    w_embed = store.add(prefix + ".w_embed", {proj, embed_dim}, Init::glorot_uniform, true);
    embedding = store.add(prefix + ".embedding", {vocab, embed_dim}, Init::glorot_uniform, true);
}

DecoderState DecoderState::initial(std::int64_t hidden_dim) {
    DecoderState s;
    s.h1 = Tensor::zeros({hidden_dim});
    s.h2 = Tensor::zeros({hidden_dim});
    s.v = Tensor::zeros({hidden_dim});
    return s;
}

Decoder::Decoder(ParameterStore& store, const DecoderConfig& config, std::int64_t vocab_size,
                 int start_token, int end_token, std::int64_t feature_dim)
    : config_(config), vocab_size_(vocab_size), start_(start_token), end_(end_token),
      feature_dim_(feature_dim) {
    config.validate();
    if (vocab_size < 2) throw ContractViolation("decoder: vocabulary must include start/end tokens");
    const bool aux = config.cell == CellKind::gi_gru;
    level1 = GruCellWeights(store, "decoder.level1", config.embedding, config.hidden, feature_dim,
                            aux, config.step_size, config.learnable_step);
    level2 = GruCellWeights(store, "decoder.level2", feature_dim, config.hidden, feature_dim, aux,
                            config.step_size, config.learnable_step);
    projection = OutputProjection(store, "decoder.projection", vocab_size, config.proj,
                                  config.hidden, feature_dim, config.embedding);
}

StepResult Decoder::step(int prev_token, const DecoderState& state, const FeatureGrid& grid,
                         const AttentionState& attn_state, const AttentionWeights& attn) const {
    if (prev_token < 0 || prev_token >= vocab_size_)
        throw ContractViolation("decode_step: token id " + std::to_string(prev_token) +
                                " outside vocabulary of size " + std::to_string(vocab_size_));
    Tensor embedded = row(projection.embedding, prev_token);
    Tensor zero_context = Tensor::zeros({feature_dim_});

    // Level 1 continues the decode's single hidden chain; its output drives
    // attention, and level 2 produces the step's final hidden state.
    Tensor h1;
    std::optional<Tensor> v1;
    if (config_.cell == CellKind::gi_gru) {
        GiGruOutput out1 = gi_gru_cell(embedded, state.h2, std::nullopt, zero_context, level1);
        h1 = out1.h;
        v1 = out1.v;
    } else {
        h1 = gru_cell(embedded, state.h2, zero_context, level1);
    }

    AttentionOutput att = attend(h1, grid, attn_state, attn);

    StepResult result;
    result.state.h1 = h1;
    if (config_.cell == CellKind::gi_gru) {
        std::optional<Tensor> v2 = v1;
        if (config_.recompute_level2_aux) v2.reset();  // level 2 derives one from the context
        GiGruOutput out2 = gi_gru_cell(att.context, h1, v2, zero_context, level2);
        result.state.h2 = out2.h;
        result.state.v = *v1;
    } else {
        result.state.h2 = gru_cell(att.context, h1, zero_context, level2);
        result.state.v = state.v;
    }

    Tensor combined = add(add(matmul(projection.v_hidden, result.state.h2),
                              matmul(projection.w_context, att.context)),
                          matmul(projection.w_embed, embedded));
    result.probabilities = softmax(matmul(projection.w_out, combined));
    result.attention = att.state;
    result.alpha = att.alpha;
    return result;
}

namespace {

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

DecodeResult Decoder::greedy(const FeatureGrid& grid, const AttentionWeights& attn,
                             int max_len) const {
    if (max_len < 1) throw ContractViolation("decode: max_len must be >= 1");
    NoGradGuard inference;
    DecodeResult result;
    DecoderState state = DecoderState::initial(config_.hidden);
    AttentionState attn_state = AttentionState::initial(grid.height(), grid.width());
    int prev = start_;
    for (int t = 0; t < max_len; ++t) {
        StepResult step_out = step(prev, state, grid, attn_state, attn);
        const int token = argmax(step_out.probabilities.data());
        result.alphas.push_back(step_out.alpha.data());
        if (token == end_) return result;
        result.tokens.push_back(token);
        state = step_out.state;
        attn_state = step_out.attention;
        prev = token;
    }
    result.truncated = true;
    return result;
}

DecodeResult Decoder::teacher_forced(const FeatureGrid& grid, const AttentionWeights& attn,
                                     const std::vector<int>& targets) const {
    DecodeResult result;
    DecoderState state = DecoderState::initial(config_.hidden);
    AttentionState attn_state = AttentionState::initial(grid.height(), grid.width());
    int prev = start_;
    for (int target : targets) {
        StepResult step_out = step(prev, state, grid, attn_state, attn);
        result.step_probabilities.push_back(step_out.probabilities);
        result.tokens.push_back(argmax(step_out.probabilities.data()));
        result.alphas.push_back(step_out.alpha.data());
        state = step_out.state;
        attn_state = step_out.attention;
        prev = target;
    }
    return result;
}

DecodeResult Decoder::beam(const FeatureGrid& grid, const AttentionWeights& attn, int width,
                           int max_len) const {
    if (width < 1) throw ContractViolation("decode: beam width must be >= 1");
    if (max_len < 1) throw ContractViolation("decode: max_len must be >= 1");
    NoGradGuard inference;

    struct Hypothesis {
        std::vector<int> tokens;
        std::vector<std::vector<double>> alphas;
        double log_prob = 0.0;
        DecoderState state;
        AttentionState attn_state;
        int prev = 0;
        bool ended = false;
        bool truncated = false;
    };

    Hypothesis root;
    root.state = DecoderState::initial(config_.hidden);
    root.attn_state = AttentionState::initial(grid.height(), grid.width());
    root.prev = start_;
    std::vector<Hypothesis> beam_set = {root};

    for (int t = 0; t < max_len; ++t) {
        bool all_ended = true;
        std::vector<Hypothesis> candidates;
        for (const Hypothesis& hyp : beam_set) {
            if (hyp.ended) {
                candidates.push_back(hyp);
                continue;
            }
            all_ended = false;
            StepResult step_out = step(hyp.prev, hyp.state, grid, hyp.attn_state, attn);
            const auto& probs = step_out.probabilities.data();
            // take the strongest `width` continuations of this hypothesis
            std::vector<int> ids(probs.size());
            for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
            std::partial_sort(ids.begin(), ids.begin() + std::min<std::size_t>(width, ids.size()),
                              ids.end(), [&](int a, int b) {
                                  if (probs[static_cast<std::size_t>(a)] != probs[static_cast<std::size_t>(b)])
                                      return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
                                  return a < b;
                              });
            for (int k = 0; k < width && k < static_cast<int>(ids.size()); ++k) {
                Hypothesis next = hyp;
                const int token = ids[static_cast<std::size_t>(k)];
                next.log_prob += std::log(probs[static_cast<std::size_t>(token)] + 1e-300);
                next.alphas.push_back(step_out.alpha.data());
                if (token == end_) {
                    next.ended = true;
                } else {
                    next.tokens.push_back(token);
                    next.state = step_out.state;
                    next.attn_state = step_out.attention;
                    next.prev = token;
                }
                candidates.push_back(std::move(next));
            }
        }
        if (all_ended) break;
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob > b.log_prob; });
        if (static_cast<int>(candidates.size()) > width) candidates.resize(static_cast<std::size_t>(width));
        beam_set = std::move(candidates);
    }

    Hypothesis* best = &beam_set.front();
    for (Hypothesis& hyp : beam_set)
        if (hyp.log_prob > best->log_prob) best = &hyp;
    DecodeResult result;
    result.tokens = best->tokens;
    result.alphas = best->alphas;
    result.truncated = !best->ended;
    return result;
}

}  // namespace dbgi
