#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dbgi/attention.hpp"
#include "dbgi/pgm.hpp"
#include "dbgi/rng.hpp"

using namespace dbgi;

namespace {

Tensor randn(Shape shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.normal();
    return t;
}

AttentionConfig tiny_attention() {
    AttentionConfig c;
    c.dim = 4;
    c.coverage_channels = 2;
    c.coverage_kernel = 3;
    return c;
}

}  // namespace

TEST_SUITE("attention") {
    TEST_CASE("config validation") {
        AttentionConfig c = tiny_attention();
        c.coverage_kernel = 4;  // even kernels cannot preserve extents
        CHECK_THROWS_AS(c.validate(), ContractViolation);
        c = tiny_attention();
        c.dim = 0;
        CHECK_THROWS_AS(c.validate(), ContractViolation);
    }

    TEST_CASE("single-position grid: alpha = [1], context = a_1 exactly") {
        ParameterStore store(1);
        AttentionWeights weights(store, "att", tiny_attention(), 3, 5);
        Rng rng(2);
        FeatureGrid grid{randn({1, 5, 1, 1}, rng)};
        Tensor hidden = randn({3}, rng);
        AttentionOutput out = attend(hidden, grid, AttentionState::initial(1, 1), weights);
        CHECK(out.alpha.size() == 1);
        CHECK(out.alpha.data()[0] == 1.0);
        for (std::int64_t c = 0; c < 5; ++c)
            CHECK(out.context.data()[static_cast<std::size_t>(c)] ==
                  grid.features.data()[static_cast<std::size_t>(c)]);
    }

    TEST_CASE("nu = 0 flattens all energies: alpha uniform, context = feature mean") {
        ParameterStore store(3);
        AttentionWeights weights(store, "att", tiny_attention(), 3, 2);
        std::fill(weights.nu.data().begin(), weights.nu.data().end(), 0.0);
        Rng rng(4);
        FeatureGrid grid{randn({1, 2, 2, 3}, rng)};
        Tensor hidden = randn({3}, rng);
        AttentionOutput out = attend(hidden, grid, AttentionState::initial(2, 3), weights);
        const std::int64_t L = grid.positions();
        for (double a : out.alpha.data()) CHECK(a == doctest::Approx(1.0 / L).epsilon(1e-12));
        for (std::int64_t c = 0; c < 2; ++c) {
            double mean = 0.0;
            for (std::int64_t i = 0; i < L; ++i)
                mean += grid.features.data()[static_cast<std::size_t>(c * L + i)];
            mean /= static_cast<double>(L);
            CHECK(out.context.data()[static_cast<std::size_t>(c)] ==
                  doctest::Approx(mean).epsilon(1e-9));
        }
    }

    TEST_CASE("two-position grid matches a scalar hand evaluation") {
        ParameterStore store(5);
        AttentionConfig config;
        config.dim = 2;
        config.coverage_channels = 1;
        config.coverage_kernel = 1;
        AttentionWeights weights(store, "att", config, 1, 2);

        // explicit numbers, evaluated by hand below
        weights.w_hidden.data() = {0.2, -0.3};                 // {2,1}
        weights.w_annotation.data() = {0.1, 0.4, -0.2, 0.3};   // {2,2}
        weights.w_coverage.data() = {0.5, -0.1};               // {2,1}
        weights.bias.data() = {0.05, -0.02};
        weights.nu.data() = {1.0, -0.5};
        weights.coverage_kernel.data() = {0.7};                // {1,1,1,1}

        FeatureGrid grid{Tensor::from_data({1, 2, 1, 2}, {1.0, 2.0, 3.0, -1.0})};
        // position vectors: a1 = (1, 3), a2 = (2, -1)
        Tensor hidden = Tensor::from_data({1}, {0.5});
        AttentionState state = AttentionState::initial(1, 2);
        state.beta.data() = {0.2, 0.6};

        AttentionOutput out = attend(hidden, grid, state, weights);

        const double a1[2] = {1.0, 3.0}, a2[2] = {2.0, -1.0};
        const double f1 = 0.7 * 0.2, f2 = 0.7 * 0.6;
        auto energy = [&](const double* a, double f) {
            const double pre0 = 0.2 * 0.5 + 0.1 * a[0] + 0.4 * a[1] + 0.5 * f + 0.05;
            const double pre1 = -0.3 * 0.5 + -0.2 * a[0] + 0.3 * a[1] + -0.1 * f + -0.02;
            return 1.0 * std::tanh(pre0) + -0.5 * std::tanh(pre1);
        };
        const double e1 = energy(a1, f1), e2 = energy(a2, f2);
        const double m = std::max(e1, e2);
        const double w1 = std::exp(e1 - m), w2 = std::exp(e2 - m);
        const double alpha1 = w1 / (w1 + w2), alpha2 = w2 / (w1 + w2);

        CHECK(out.alpha.data()[0] == doctest::Approx(alpha1).epsilon(1e-12));
        CHECK(out.alpha.data()[1] == doctest::Approx(alpha2).epsilon(1e-12));
        CHECK(out.context.data()[0] == doctest::Approx(alpha1 * a1[0] + alpha2 * a2[0]).epsilon(1e-12));
        CHECK(out.context.data()[1] == doctest::Approx(alpha1 * a1[1] + alpha2 * a2[1]).epsilon(1e-12));
    }

    TEST_CASE("ten-step invariants: alpha simplex, exact beta recurrence, hull containment") {
        ParameterStore store(7);
        AttentionWeights weights(store, "att", tiny_attention(), 4, 3);
        Rng rng(8);
        FeatureGrid grid{randn({1, 3, 2, 4}, rng)};
        const std::int64_t L = grid.positions();
        AttentionState state = AttentionState::initial(2, 4);

        for (int t = 0; t < 10; ++t) {
            const std::vector<double> beta_before = state.beta.data();
            Tensor hidden = randn({4}, rng);
            AttentionOutput out = attend(hidden, grid, state, weights);

            double total = 0.0;
            for (double a : out.alpha.data()) {
                CHECK(a >= 0.0);
                total += a;
            }
            CHECK(std::abs(total - 1.0) <= 1e-9);

            // beta_t is bitwise the running sum beta_{t-1} + alpha_{t-1}
            for (std::int64_t i = 0; i < L; ++i)
                CHECK(out.state.beta.data()[static_cast<std::size_t>(i)] ==
                      beta_before[static_cast<std::size_t>(i)] +
                          out.alpha.data()[static_cast<std::size_t>(i)]);

            // context lies in the per-coordinate hull of the a_i
            for (std::int64_t c = 0; c < 3; ++c) {
                double lo = grid.features.data()[static_cast<std::size_t>(c * L)], hi = lo;
                for (std::int64_t i = 1; i < L; ++i) {
                    const double v = grid.features.data()[static_cast<std::size_t>(c * L + i)];
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                CHECK(out.context.data()[static_cast<std::size_t>(c)] >= lo - 1e-12);
                CHECK(out.context.data()[static_cast<std::size_t>(c)] <= hi + 1e-12);
            }
            state = out.state;
        }
        // after 10 steps the attention sum holds mass 10
        double mass = 0.0;
        for (double b : state.beta.data()) mass += b;
        CHECK(mass == doctest::Approx(10.0).epsilon(1e-9));
    }

    TEST_CASE("coverage influence: w_coverage = 0 makes attend history-blind") {
        ParameterStore store(9);
        AttentionWeights weights(store, "att", tiny_attention(), 4, 3);
        std::fill(weights.w_coverage.data().begin(), weights.w_coverage.data().end(), 0.0);
        Rng rng(10);
        FeatureGrid grid{randn({1, 3, 2, 2}, rng)};
        Tensor hidden = randn({4}, rng);

        AttentionState empty = AttentionState::initial(2, 2);
        AttentionState loaded = AttentionState::initial(2, 2);
        for (double& b : loaded.beta.data()) b = rng.uniform();

        AttentionOutput a = attend(hidden, grid, empty, weights);
        AttentionOutput b = attend(hidden, grid, loaded, weights);
        for (std::size_t i = 0; i < a.alpha.data().size(); ++i)
            CHECK(a.alpha.data()[i] == b.alpha.data()[i]);
    }

    TEST_CASE("coverage influence: nonzero w_coverage reacts to beta") {
        ParameterStore store(11);
        AttentionWeights weights(store, "att", tiny_attention(), 4, 3);
        Rng rng(12);
        FeatureGrid grid{randn({1, 3, 2, 2}, rng)};
        Tensor hidden = randn({4}, rng);

        AttentionState empty = AttentionState::initial(2, 2);
        AttentionState loaded = AttentionState::initial(2, 2);
        loaded.beta.data() = {1.0, 0.0, 0.0, 0.0};

        AttentionOutput a = attend(hidden, grid, empty, weights);
        AttentionOutput b = attend(hidden, grid, loaded, weights);
        double diff = 0.0;
        for (std::size_t i = 0; i < a.alpha.data().size(); ++i)
            diff += std::abs(a.alpha.data()[i] - b.alpha.data()[i]);
        CHECK(diff > 1e-9);
    }

    TEST_CASE("spatial mismatch between state and grid is a contract violation") {
        ParameterStore store(13);
        AttentionWeights weights(store, "att", tiny_attention(), 4, 3);
        Rng rng(14);
        FeatureGrid grid{randn({1, 3, 2, 2}, rng)};
        CHECK_THROWS_AS(attend(randn({4}, rng), grid, AttentionState::initial(3, 3), weights),
                        ContractViolation);
    }

    TEST_CASE("alpha maps dump as scaled P5 PGM") {
        namespace fs = std::filesystem;
        const fs::path path = fs::temp_directory_path() / "dbgi_alpha_test.pgm";
        write_alpha_pgm(path.string(), {0.1, 0.2, 0.4, 0.3, 0.0, 0.1}, 2, 3);
        PgmImage image = read_pgm(path.string());
        CHECK(image.width == 3);
        CHECK(image.height == 2);
        CHECK(image.pixels[2] == 255);  // the peak scales to full white
        CHECK(image.pixels[4] == 0);
        fs::remove(path);
    }
}
