#include "dbgi/attention.hpp"

#include <algorithm>
#include <fstream>

namespace dbgi {

void AttentionConfig::validate() const {
    if (dim < 1) throw ContractViolation("attention: dim must be >= 1");
    if (coverage_channels < 1) throw ContractViolation("attention: coverage_channels must be >= 1");
    if (coverage_kernel < 1 || coverage_kernel % 2 == 0)
        throw ContractViolation("attention: coverage_kernel must be odd and >= 1");
}

AttentionWeights::AttentionWeights(ParameterStore& store, const std::string& prefix,
                                   const AttentionConfig& config, std::int64_t hidden_dim,
                                   std::int64_t feature_dim) {
    config.validate();
    const std::int64_t d = config.dim;
    const std::int64_t q = config.coverage_channels;
    const std::int64_t k = config.coverage_kernel;
    nu = store.add(prefix + ".nu", {d}, Init::glorot_uniform, /*decay=*/true);
    w_hidden = store.add(prefix + ".w_hidden", {d, hidden_dim}, Init::glorot_uniform, true);
    w_annotation = store.add(prefix + ".w_annotation", {d, feature_dim}, Init::glorot_uniform, true);
    w_coverage = store.add(prefix + ".w_coverage", {d, q}, Init::glorot_uniform, true);
    bias = store.add(prefix + ".bias", {d}, Init::zeros, false);
    coverage_kernel = store.add(prefix + ".coverage_kernel", {q, 1, k, k}, Init::glorot_uniform, true);
}

AttentionState AttentionState::initial(std::int64_t height, std::int64_t width) {
    AttentionState s;
    s.beta = Tensor::zeros({1, 1, height, width});
    return s;
}

AttentionOutput attend(const Tensor& hidden, const FeatureGrid& grid, const AttentionState& state,
                       const AttentionWeights& weights) {
    if (grid.positions() < 1) throw ContractViolation("attend: empty feature grid");
    if (state.beta.dim(2) != grid.height() || state.beta.dim(3) != grid.width())
        throw ContractViolation("attend: attention-sum map " + shape_str(state.beta.shape()) +
                                " does not match grid " + shape_str(grid.features.shape()));

    const std::int64_t q = weights.coverage_kernel.dim(0);
    const std::int64_t kf = weights.coverage_kernel.dim(2);
    const std::int64_t L = grid.positions();

    // F = Q * beta, one q-vector per grid position
    Tensor coverage = conv2d(state.beta, weights.coverage_kernel, Tensor(), 1,
                             static_cast<int>(kf / 2), 1);
    Tensor coverage_mat = transpose(reshape(coverage, {q, L}));  // {L, q}

    Tensor annotations = grid.position_matrix();  // {L, N'}

    // e_i = nu . tanh(W_h' h' + W_a a_i + W_f f_i + b)
    Tensor per_step = add(matmul(weights.w_hidden, hidden), weights.bias);  // {d'}
    Tensor pre = add(add(matmul(annotations, transpose(weights.w_annotation)),
                         matmul(coverage_mat, transpose(weights.w_coverage))),
                     per_step);                                             // {L, d'} (broadcast)
    Tensor energies = matmul(dbgi::tanh(pre), weights.nu);                  // {L}
    Tensor alpha = softmax(energies);

    AttentionOutput out;
    out.alpha = alpha;
    out.context = matmul(transpose(annotations), alpha);  // {N'}
    out.state.beta = add(state.beta, reshape(alpha, {1, 1, grid.height(), grid.width()}));
    out.state.last_alpha = alpha;
    out.state.last_context = out.context;
    return out;
}

void write_alpha_pgm(const std::string& path, const std::vector<double>& alpha,
                     std::int64_t height, std::int64_t width) {
    if (static_cast<std::int64_t>(alpha.size()) != height * width)
        throw ContractViolation("alpha length does not match grid extents");
    double peak = 0.0;
    for (double v : alpha) peak = std::max(peak, v);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P5\n" << width << " " << height << "\n255\n";
    for (double v : alpha) {
        const double scaled = peak > 0.0 ? v / peak * 255.0 : 0.0;
        os.put(static_cast<char>(static_cast<unsigned char>(std::clamp(scaled, 0.0, 255.0))));
    }
    if (!os) throw IoError("write failure: " + path);
}

}  // namespace dbgi
