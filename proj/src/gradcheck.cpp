#include "dbgi/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dbgi/decoder.hpp"
#include "dbgi/encoder.hpp"
#include "dbgi/model.hpp"
#include "dbgi/rng.hpp"
#include "dbgi/train.hpp"

namespace dbgi::gradcheck {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.normal(0.0, scale);
    return t;
}

// values bounded away from zero, for relu-style kinks
Tensor random_tensor_off_zero(Shape shape, Rng& rng, double margin = 0.1) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) {
        const double magnitude = margin + rng.uniform();
        v = rng.below(2) ? magnitude : -magnitude;
    }
    return t;
}

Tensor random_positive(Shape shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = 0.2 + rng.uniform();
    return t;
}

// fixed projection so multi-valued outputs reduce to one scalar
std::function<Tensor(const Tensor&)> scalarizer(const Shape& out_shape, Rng& rng) {
    Tensor weights = random_tensor(out_shape, rng);
    return [weights](const Tensor& out) { return sum(mul(out, weights)); };
}

}  // namespace

CheckResult check_gradients(const std::string& name, std::vector<Tensor> leaves,
                            const std::function<Tensor(const std::vector<Tensor>&)>& build,
                            std::uint64_t seed, const CheckOptions& options) {
    CheckResult result;
    result.name = name;

    for (Tensor& leaf : leaves) leaf.set_requires_grad(true);
    Tensor loss = build(leaves);
    backward(loss);

    std::vector<std::vector<double>> analytic;
    for (Tensor& leaf : leaves) {
        analytic.push_back(leaf.has_grad() ? leaf.grad()
                                           : std::vector<double>(static_cast<std::size_t>(leaf.size()), 0.0));
        leaf.zero_grad();
    }

    Rng rng = Rng::derive(seed, 0x67726164);
    result.passed = true;
    for (int probe = 0; probe < options.probes; ++probe) {
        const std::size_t which = static_cast<std::size_t>(rng.below(leaves.size()));
        Tensor& leaf = leaves[which];
        const std::size_t coord = static_cast<std::size_t>(
            rng.below(static_cast<std::uint64_t>(leaf.size())));
        const double original = leaf.data()[coord];

        double plus, minus;
        {
            NoGradGuard guard;
            leaf.data()[coord] = original + options.step;
            plus = build(leaves).value();
            leaf.data()[coord] = original - options.step;
            minus = build(leaves).value();
            leaf.data()[coord] = original;
        }
        const double fd = (plus - minus) / (2.0 * options.step);
        const double an = analytic[which][coord];
        const double rel = std::abs(fd - an) / std::max({1e-6, std::abs(fd), std::abs(an)});
        result.max_rel_err = std::max(result.max_rel_err, rel);
        if (rel >= options.tolerance) {
            result.passed = false;
            result.detail = "leaf " + std::to_string(which) + " coord " + std::to_string(coord) +
                            ": analytic " + std::to_string(an) + " vs fd " + std::to_string(fd);
        }
    }
    return result;
}

namespace {

std::vector<Tensor> trainable_of(const ParameterStore& store) {
    std::vector<Tensor> leaves;
    for (const Parameter& p : store.entries())
        if (p.trainable) leaves.push_back(p.tensor);
    return leaves;
}

void add_primitive_checks(std::vector<CheckResult>& results, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 1);
    CheckOptions opts;

    {
        auto project = scalarizer({3, 4}, rng);
        results.push_back(check_gradients(
            "add broadcast {3,4}+{4}", {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
            [project](const std::vector<Tensor>& in) { return project(add(in[0], in[1])); }, seed));
        results.push_back(check_gradients(
            "sub {3,4}-{3,4}", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
            [project](const std::vector<Tensor>& in) { return project(sub(in[0], in[1])); }, seed));
        results.push_back(check_gradients(
            "mul broadcast {3,4}*{3,1}", {random_tensor({3, 4}, rng), random_tensor({3, 1}, rng)},
            [project](const std::vector<Tensor>& in) { return project(mul(in[0], in[1])); }, seed));
    }
    {
        auto project = scalarizer({2, 3, 2, 2}, rng);
        results.push_back(check_gradients(
            "add nchw broadcast {2,3,2,2}+{2,1,2,2}",
            {random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 1, 2, 2}, rng)},
            [project](const std::vector<Tensor>& in) { return project(add(in[0], in[1])); }, seed));
        results.push_back(check_gradients(
            "mul scalar broadcast {2,3,2,2}*{}",
            {random_tensor({2, 3, 2, 2}, rng), random_tensor({}, rng)},
            [project](const std::vector<Tensor>& in) { return project(mul(in[0], in[1])); }, seed));
    }
    results.push_back(check_gradients(
        "scale/add_const/neg", {random_tensor({5}, rng)},
        [](const std::vector<Tensor>& in) { return sum(neg(add_const(scale(in[0], 1.7), 0.3))); },
        seed));
    {
        auto project = scalarizer({3, 2}, rng);
        results.push_back(check_gradients(
            "matmul {3,4}x{4,2}", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
            [project](const std::vector<Tensor>& in) { return project(matmul(in[0], in[1])); },
            seed));
    }
    {
        auto project = scalarizer({3}, rng);
        results.push_back(check_gradients(
            "matmul {3,4}x{4}", {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
            [project](const std::vector<Tensor>& in) { return project(matmul(in[0], in[1])); },
            seed));
    }
    {
        auto project = scalarizer({4, 3}, rng);
        results.push_back(check_gradients(
            "transpose {3,4}", {random_tensor({3, 4}, rng)},
            [project](const std::vector<Tensor>& in) { return project(transpose(in[0])); }, seed));
    }
    {
        auto project = scalarizer({12}, rng);
        results.push_back(check_gradients(
            "reshape {3,4}->{12}", {random_tensor({3, 4}, rng)},
            [project](const std::vector<Tensor>& in) { return project(reshape(in[0], {12})); },
            seed));
    }
    {
        auto project = scalarizer({2, 6}, rng);
        results.push_back(check_gradients(
            "relu", {random_tensor_off_zero({2, 6}, rng)},
            [project](const std::vector<Tensor>& in) { return project(relu(in[0])); }, seed));
        results.push_back(check_gradients(
            "sigmoid", {random_tensor({2, 6}, rng)},
            [project](const std::vector<Tensor>& in) { return project(sigmoid(in[0])); }, seed));
        results.push_back(check_gradients(
            "tanh", {random_tensor({2, 6}, rng)},
            [project](const std::vector<Tensor>& in) { return project(dbgi::tanh(in[0])); }, seed));
        results.push_back(check_gradients(
            "log", {random_positive({2, 6}, rng)},
            [project](const std::vector<Tensor>& in) { return project(log(in[0])); }, seed));
        results.push_back(check_gradients(
            "softmax rows", {random_tensor({2, 6}, rng)},
            [project](const std::vector<Tensor>& in) { return project(softmax(in[0])); }, seed));
    }
    results.push_back(check_gradients(
        "softmax vector + pick + log", {random_tensor({7}, rng)},
        [](const std::vector<Tensor>& in) { return neg(log(add_const(pick(softmax(in[0]), 3), 1e-12))); },
        seed));
    results.push_back(check_gradients(
        "sum", {random_tensor({3, 3}, rng)},
        [](const std::vector<Tensor>& in) { return sum(in[0]); }, seed));
    results.push_back(check_gradients(
        "pick", {random_tensor({9}, rng)},
        [](const std::vector<Tensor>& in) { return pick(in[0], 4); }, seed));
    {
        auto project = scalarizer({5}, rng);
        results.push_back(check_gradients(
            "row (embedding lookup)", {random_tensor({4, 5}, rng)},
            [project](const std::vector<Tensor>& in) { return project(row(in[0], 2)); }, seed));
    }
    {
        auto project = scalarizer({1, 5, 3, 3}, rng);
        results.push_back(check_gradients(
            "concat_channels", {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 3, 3, 3}, rng)},
            [project](const std::vector<Tensor>& in) {
                return project(concat_channels({in[0], in[1]}));
            },
            seed));
    }
    {
        auto project = scalarizer({1, 2, 3, 3}, rng);
        results.push_back(check_gradients(
            "slice_channels", {random_tensor({1, 5, 3, 3}, rng)},
            [project](const std::vector<Tensor>& in) { return project(slice_channels(in[0], 1, 3)); },
            seed));
    }

    // convolution and pooling
    {
        auto project = scalarizer({2, 3, 4, 4}, rng);
        results.push_back(check_gradients(
            "conv2d 3x3 pad 1",
            {random_tensor({2, 2, 4, 4}, rng), random_tensor({3, 2, 3, 3}, rng),
             random_tensor({3}, rng)},
            [project](const std::vector<Tensor>& in) {
                return project(conv2d(in[0], in[1], in[2], 1, 1, 1));
            },
            seed));
    }
    {
        auto project = scalarizer({1, 2, 2, 2}, rng);
        results.push_back(check_gradients(
            "conv2d 3x3 stride 2 pad 1",
            {random_tensor({1, 3, 4, 4}, rng), random_tensor({2, 3, 3, 3}, rng),
             random_tensor({2}, rng)},
            [project](const std::vector<Tensor>& in) {
                return project(conv2d(in[0], in[1], in[2], 2, 1, 1));
            },
            seed));
    }
    {
        auto project = scalarizer({1, 1, 6, 6}, rng);
        results.push_back(check_gradients(
            "conv2d 3x3 dilation 2 pad 2",
            {random_tensor({1, 2, 6, 6}, rng), random_tensor({1, 2, 3, 3}, rng),
             random_tensor({1}, rng)},
            [project](const std::vector<Tensor>& in) {
                return project(conv2d(in[0], in[1], in[2], 1, 2, 2));
            },
            seed));
    }
    {
        auto project = scalarizer({1, 2, 2, 2}, rng);
        results.push_back(check_gradients(
            "avg_pool2d 2/2", {random_tensor({1, 2, 4, 4}, rng)},
            [project](const std::vector<Tensor>& in) { return project(avg_pool2d(in[0], 2, 2)); },
            seed));
    }
    {
        // spread values so finite differences never flip an argmax
        Tensor input = random_tensor({1, 2, 5, 5}, rng);
        for (double& v : input.data()) v *= 8.0;
        auto project = scalarizer({1, 2, 3, 3}, rng);
        results.push_back(check_gradients(
            "max_pool2d 3/2 pad 1", {input},
            [project](const std::vector<Tensor>& in) { return project(max_pool2d(in[0], 3, 2, 1)); },
            seed));
    }
    {
        auto project = scalarizer({2, 3, 1, 1}, rng);
        results.push_back(check_gradients(
            "global_avg_pool", {random_tensor({2, 3, 3, 4}, rng)},
            [project](const std::vector<Tensor>& in) { return project(global_avg_pool(in[0])); },
            seed));
    }
    for (const bool training : {true, false}) {
        auto project = scalarizer({2, 3, 2, 2}, rng);
        Tensor rm = random_tensor({3}, rng), rv = random_positive({3}, rng);
        results.push_back(check_gradients(
            std::string("batch_norm ") + (training ? "train" : "eval"),
            {random_tensor({2, 3, 2, 2}, rng), random_tensor({3}, rng), random_tensor({3}, rng)},
            [project, rm, rv, training](const std::vector<Tensor>& in) {
                Tensor mean = rm.clone(), var = rv.clone();
                return project(batch_norm(in[0], in[1], in[2], mean, var, training, 0.1, 1e-5));
            },
            seed));
    }
}

void add_composite_checks(std::vector<CheckResult>& results, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 2);

    {  // dense layer + transition
        ParameterStore store(seed);
        DenseLayer layer(store, "layer", 5, 3);
        Transition transition(store, "transition", 8, 0.5);
        Tensor input = random_tensor({1, 5, 4, 4}, rng);
        auto project = scalarizer({1, 4, 2, 2}, rng);
        std::vector<Tensor> leaves = trainable_of(store);
        leaves.push_back(input);
        results.push_back(check_gradients(
            "dense layer -> concat -> transition", leaves,
            [&, project](const std::vector<Tensor>&) {
                Tensor fresh = layer.forward(input, true);
                return project(transition.forward(concat_channels({input, fresh})));
            },
            seed));
    }
    {  // bottleneck attention block
        ParameterStore store(seed);
        Bam bam(store, "bam", 4, 2, 2);
        Tensor input = random_tensor({1, 4, 4, 4}, rng);
        auto project = scalarizer({1, 4, 4, 4}, rng);
        std::vector<Tensor> leaves = trainable_of(store);
        leaves.push_back(input);
        results.push_back(check_gradients(
            "bam residual gate", leaves,
            [&, project](const std::vector<Tensor>&) { return project(bam.forward(input, true)); },
            seed));
    }
    {  // coverage attention
        ParameterStore store(seed);
        AttentionConfig config;
        config.dim = 6;
        config.coverage_channels = 3;
        config.coverage_kernel = 3;
        AttentionWeights weights(store, "attention", config, 5, 4);
        FeatureGrid grid{random_tensor({1, 4, 2, 3}, rng)};
        Tensor hidden = random_tensor({5}, rng);
        AttentionState state = AttentionState::initial(2, 3);
        for (double& v : state.beta.data()) v = rng.uniform();
        auto project = scalarizer({4}, rng);
        std::vector<Tensor> leaves = trainable_of(store);
        leaves.push_back(hidden);
        results.push_back(check_gradients(
            "coverage attention", leaves,
            [&, project](const std::vector<Tensor>&) {
                return project(attend(hidden, grid, state, weights).context);
            },
            seed));
    }
    {  // recurrent cells
        ParameterStore store(seed);
        GruCellWeights plain(store, "gru", 3, 4, 2, false, 0.0, false);
        GruCellWeights gated(store, "gigru", 3, 4, 2, true, 0.8, false);
        Tensor x = random_tensor({3}, rng), h = random_tensor({4}, rng), c = random_tensor({2}, rng);
        auto project = scalarizer({4}, rng);
        std::vector<Tensor> leaves = trainable_of(store);
        leaves.push_back(x);
        leaves.push_back(h);
        leaves.push_back(c);
        results.push_back(check_gradients(
            "gru cell", leaves,
            [&, project](const std::vector<Tensor>&) { return project(gru_cell(x, h, c, plain)); },
            seed));
        results.push_back(check_gradients(
            "gi-gru cell", leaves,
            [&, project](const std::vector<Tensor>&) {
                return project(gi_gru_cell(x, h, std::nullopt, c, gated).h);
            },
            seed));
    }
    {  // full model: teacher-forced loss on a tiny configuration
        ModelConfig config;
        config.encoder.stem_channels = 4;
        config.encoder.growth_rate = 2;
        config.encoder.layers_per_block = {1, 1, 1};
        config.encoder.bam_after = {2, 3};
        config.encoder.reduction_ratio = 2;
        config.encoder.spatial_dilation = 2;
        config.attention.dim = 6;
        config.attention.coverage_channels = 3;
        config.attention.coverage_kernel = 3;
        config.decoder.hidden = 5;
        config.decoder.embedding = 4;
        config.decoder.proj = 4;
        config.decoder.cell = CellKind::gi_gru;
        Model model(config, 6, 1, 2, seed);
        Tensor image = Tensor::zeros({1, 1, 32, 32});
        Rng image_rng = Rng::derive(seed, 7);
        for (double& v : image.data()) v = image_rng.below(4) == 0 ? 1.0 : 0.0;
        const std::vector<int> targets = {4, 5, 2};
        results.push_back(check_gradients(
            "end-to-end teacher-forced loss", trainable_of(model.store),
            [&](const std::vector<Tensor>&) {
                DecodeResult forced = model.decode_teacher_forced(image, targets);
                return sequence_loss(forced.step_probabilities, targets, model.store, 0.01);
            },
            seed, {1e-5, 1e-4, 6}));
    }
}

}  // namespace

std::vector<CheckResult> run_all(std::uint64_t seed) {
    std::vector<CheckResult> results;
    add_primitive_checks(results, seed);
    add_composite_checks(results, seed);
    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(),
                       [](const CheckResult& r) { return r.passed; });
}

}  // namespace dbgi::gradcheck
