#include <doctest.h>

#include <cmath>

#include "dbgi/rng.hpp"
#include "dbgi/tensor.hpp"
#include "oracles.hpp"

using namespace dbgi;

namespace {

Tensor randn(Shape shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.normal();
    return t;
}

}  // namespace

TEST_SUITE("tensor.basics") {
    TEST_CASE("shape bookkeeping and invariants") {
        Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
        CHECK(t.size() == 6);
        CHECK(t.rank() == 2);
        CHECK(t.dim(0) == 2);
        CHECK(numel(t.shape()) == 6);
        CHECK(t.all_finite());
        CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ContractViolation);
    }

    TEST_CASE("rank-0 scalars hold one element") {
        Tensor s = Tensor::scalar(2.5);
        CHECK(s.rank() == 0);
        CHECK(s.size() == 1);
        CHECK(s.value() == 2.5);
    }
}

TEST_SUITE("tensor.elementwise") {
    TEST_CASE("sigmoid(0)=0.5, tanh(0)=0") {
        Tensor zero = Tensor::zeros({3});
        CHECK(sigmoid(zero).data()[0] == doctest::Approx(0.5));
        CHECK(dbgi::tanh(zero).data()[1] == doctest::Approx(0.0));
    }

    TEST_CASE("softmax of a uniform vector is 1/L") {
        for (int len : {1, 4, 9}) {
            Tensor v = Tensor::full({len}, 0.73);
            Tensor s = softmax(v);
            for (double p : s.data()) CHECK(p == doctest::Approx(1.0 / len).epsilon(1e-12));
        }
    }

    TEST_CASE("softmax contract: entries in (0,1), sums to 1, shift invariant") {
        Rng rng(11);
        Tensor v = randn({12}, rng);
        Tensor s = softmax(v);
        double total = 0.0;
        for (double p : s.data()) {
            CHECK(p > 0.0);
            CHECK(p < 1.0);
            total += p;
        }
        CHECK(std::abs(total - 1.0) < 1e-9);

        Tensor shifted = softmax(add_const(v, 123.456));
        for (std::size_t i = 0; i < s.data().size(); ++i)
            CHECK(shifted.data()[i] == doctest::Approx(s.data()[i]).epsilon(1e-12));
    }

    TEST_CASE("softmax handles large magnitudes without overflow") {
        Tensor v = Tensor::from_data({3}, {1000.0, 1001.0, 999.0});
        Tensor s = softmax(v);
        CHECK(s.all_finite());
        CHECK(s.data()[1] > s.data()[0]);
    }

    TEST_CASE("broadcast add/mul against manual expansion") {
        Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
        Tensor b = Tensor::from_data({3}, {10, 20, 30});
        Tensor c = add(a, b);
        CHECK(c.data() == std::vector<double>{11, 22, 33, 14, 25, 36});
        Tensor d = mul(a, Tensor::from_data({2, 1}, {2, -1}));
        CHECK(d.data() == std::vector<double>{2, 4, 6, -4, -5, -6});
        CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2, 2})), ContractViolation);
    }
}

TEST_SUITE("tensor.matmul") {
    TEST_CASE("2x3 * 3x2 matches the triple-loop oracle") {
        Rng rng(5);
        Tensor a = randn({2, 3}, rng), b = randn({3, 2}, rng);
        Tensor c = matmul(a, b);
        const auto expect = oracle::matmul(a.data(), 2, 3, b.data(), 2);
        REQUIRE(c.data().size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i)
            CHECK(c.data()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }

    TEST_CASE("matrix-vector product") {
        Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
        Tensor v = Tensor::from_data({2}, {5, 6});
        Tensor out = matmul(a, v);
        CHECK(out.shape() == Shape{2});
        CHECK(out.data() == std::vector<double>{17, 39});
    }

    TEST_CASE("inner dimension mismatch is a contract violation") {
        CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), ContractViolation);
    }
}

TEST_SUITE("tensor.conv") {
    TEST_CASE("1x1 identity kernel reproduces the input") {
        Tensor in = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
        Tensor kernel = Tensor::from_data({1, 1, 1, 1}, {1.0});
        Tensor bias = Tensor::zeros({1});
        Tensor out = conv2d(in, kernel, bias, 1, 0, 1);
        CHECK(out.shape() == in.shape());
        CHECK(out.data() == in.data());
    }

    TEST_CASE("all-ones 3x3 kernel with padding 1 matches the nested-loop oracle") {
        Tensor in = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
        Tensor kernel = Tensor::full({1, 1, 3, 3}, 1.0);
        Tensor out = conv2d(in, kernel, Tensor::zeros({1}), 1, 1, 1);
        std::int64_t oh, ow;
        const auto expect =
            oracle::conv2d(in.data(), 1, 1, 3, 3, kernel.data(), 1, 3, 3, {0.0}, 1, 1, 1, oh, ow);
        CHECK(oh == 3);
        CHECK(out.data() == expect);
        CHECK(out.data()[4] == 45.0);  // center element: sum of all nine
    }

    TEST_CASE("zero kernel and zero bias annihilate any input") {
        Rng rng(3);
        Tensor in = randn({2, 3, 5, 4}, rng);
        Tensor out = conv2d(in, Tensor::zeros({2, 3, 3, 3}), Tensor::zeros({2}), 1, 1, 1);
        for (double v : out.data()) CHECK(v == 0.0);
    }

    TEST_CASE("strided/dilated output equals the oracle within 1e-12") {
        Rng rng(17);
        Tensor in = randn({2, 3, 9, 8}, rng);
        Tensor kernel = randn({4, 3, 3, 3}, rng);
        Tensor bias = randn({4}, rng);
        for (const auto [stride, padding, dilation] :
             {std::tuple{1, 1, 1}, std::tuple{2, 1, 1}, std::tuple{1, 2, 2}, std::tuple{3, 0, 1}}) {
            Tensor out = conv2d(in, kernel, bias, stride, padding, dilation);
            std::int64_t oh, ow;
            const auto expect = oracle::conv2d(in.data(), 2, 3, 9, 8, kernel.data(), 4, 3, 3,
                                               bias.data(), stride, padding, dilation, oh, ow);
            REQUIRE(out.dim(2) == oh);
            REQUIRE(out.dim(3) == ow);
            for (std::size_t i = 0; i < expect.size(); ++i)
                CHECK(std::abs(out.data()[i] - expect[i]) < 1e-12);
        }
    }

    TEST_CASE("channel mismatch between kernel and input throws") {
        CHECK_THROWS_AS(
            conv2d(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1}), 1, 1, 1),
            ContractViolation);
    }

    TEST_CASE("kernel larger than padded input throws") {
        CHECK_THROWS_AS(
            conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor::zeros({1}), 1, 0, 1),
            ContractViolation);
    }
}

TEST_SUITE("tensor.pooling") {
    TEST_CASE("constant input pools to the same constant") {
        Tensor in = Tensor::full({1, 2, 4, 4}, 3.25);
        Tensor out = avg_pool2d(in, 2, 2);
        for (double v : out.data()) CHECK(v == 3.25);
    }

    TEST_CASE("2x2 window over [[1,2],[3,4]] averages to 2.5") {
        Tensor in = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
        CHECK(avg_pool2d(in, 2, 2).data()[0] == 2.5);
    }

    TEST_CASE("random 4x4 pool matches the nested-loop oracle") {
        Rng rng(23);
        Tensor in = randn({1, 3, 4, 4}, rng);
        Tensor out = avg_pool2d(in, 2, 2);
        std::int64_t oh, ow;
        const auto expect = oracle::avg_pool(in.data(), 1, 3, 4, 4, 2, 2, oh, ow);
        for (std::size_t i = 0; i < expect.size(); ++i)
            CHECK(std::abs(out.data()[i] - expect[i]) < 1e-12);
    }

    TEST_CASE("window larger than the input throws") {
        CHECK_THROWS_AS(avg_pool2d(Tensor::zeros({1, 1, 2, 2}), 3, 1), ContractViolation);
    }

    TEST_CASE("global average pool per channel") {
        Tensor constant = Tensor::full({1, 1, 3, 5}, 7.0);
        CHECK(global_avg_pool(constant).data()[0] == 7.0);

        Tensor grid = Tensor::from_data({1, 1, 2, 2}, {1, 3, 5, 7});
        CHECK(global_avg_pool(grid).data()[0] == 4.0);

        Rng rng(29);
        Tensor in = randn({2, 3, 3, 4}, rng);
        Tensor out = global_avg_pool(in);
        CHECK(out.shape() == Shape{2, 3, 1, 1});
        for (std::int64_t b = 0; b < 2; ++b)
            for (std::int64_t ch = 0; ch < 3; ++ch) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < 12; ++i)
                    acc += in.data()[static_cast<std::size_t>((b * 3 + ch) * 12 + i)];
                CHECK(out.data()[static_cast<std::size_t>(b * 3 + ch)] ==
                      doctest::Approx(acc / 12.0).epsilon(1e-12));
            }
    }

    TEST_CASE("max pool takes window maxima and respects padding") {
        Tensor in = Tensor::from_data({1, 1, 2, 2}, {1, 9, 3, 4});
        CHECK(max_pool2d(in, 2, 2, 0).data()[0] == 9.0);
        Tensor padded = max_pool2d(in, 3, 2, 1);
        CHECK(padded.dim(2) == 1);
        CHECK(padded.data()[0] == 9.0);
    }
}

TEST_SUITE("tensor.batch_norm") {
    TEST_CASE("train mode with gamma=1 beta=0 normalizes each channel") {
        Rng rng(31);
        Tensor in = randn({4, 2, 3, 3}, rng);
        Tensor gamma = Tensor::full({2}, 1.0), beta = Tensor::zeros({2});
        Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
        Tensor out = batch_norm(in, gamma, beta, rm, rv, true, 0.1, 1e-5);
        std::vector<double> mean, var;
        oracle::channel_stats(out.data(), 4, 2, 9, mean, var);
        for (double m : mean) CHECK(std::abs(m) < 1e-12);
        for (double v : var) CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
    }

    TEST_CASE("gamma=0 collapses the output to beta") {
        Rng rng(37);
        Tensor in = randn({2, 3, 2, 2}, rng);
        Tensor gamma = Tensor::zeros({3}), beta = Tensor::from_data({3}, {1.0, -2.0, 0.5});
        Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
        Tensor out = batch_norm(in, gamma, beta, rm, rv, true, 0.1, 1e-5);
        for (std::int64_t b = 0; b < 2; ++b)
            for (std::int64_t ch = 0; ch < 3; ++ch)
                for (std::int64_t i = 0; i < 4; ++i)
                    CHECK(out.data()[static_cast<std::size_t>((b * 3 + ch) * 4 + i)] ==
                          beta.data()[static_cast<std::size_t>(ch)]);
    }

    TEST_CASE("fixed 2-channel batch matches the two-pass statistics oracle") {
        Tensor in = Tensor::from_data({2, 2, 1, 2}, {1, 2, 10, 20, 3, 4, 30, 40});
        Tensor gamma = Tensor::from_data({2}, {2.0, 0.5});
        Tensor beta = Tensor::from_data({2}, {1.0, -1.0});
        Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
        const double eps = 1e-5;
        Tensor out = batch_norm(in, gamma, beta, rm, rv, true, 0.1, eps);

        std::vector<double> mean, var;
        oracle::channel_stats(in.data(), 2, 2, 2, mean, var);
        for (std::int64_t b = 0; b < 2; ++b)
            for (std::int64_t ch = 0; ch < 2; ++ch)
                for (std::int64_t i = 0; i < 2; ++i) {
                    const std::size_t idx = static_cast<std::size_t>((b * 2 + ch) * 2 + i);
                    const double xhat = (in.data()[idx] - mean[static_cast<std::size_t>(ch)]) /
                                        std::sqrt(var[static_cast<std::size_t>(ch)] + eps);
                    const double expect = gamma.data()[static_cast<std::size_t>(ch)] * xhat +
                                          beta.data()[static_cast<std::size_t>(ch)];
                    CHECK(out.data()[idx] == doctest::Approx(expect).epsilon(1e-12));
                }
        // running stats moved toward the batch statistics (unbiased variance)
        CHECK(rm.data()[0] == doctest::Approx(0.1 * mean[0]));
        CHECK(rv.data()[0] == doctest::Approx(0.9 + 0.1 * var[0] * 4.0 / 3.0));
    }

    TEST_CASE("single value per channel normalizes to beta, no NaN") {
        Tensor in = Tensor::from_data({1, 2, 1, 1}, {5.0, -3.0});
        Tensor gamma = Tensor::full({2}, 1.0), beta = Tensor::from_data({2}, {0.25, 0.5});
        Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
        Tensor out = batch_norm(in, gamma, beta, rm, rv, true, 0.1, 1e-5);
        CHECK(out.all_finite());
        CHECK(out.data()[0] == doctest::Approx(0.25));
        CHECK(out.data()[1] == doctest::Approx(0.5));
        // no variance estimate from one value: running stats untouched
        CHECK(rm.data()[0] == 0.0);
        CHECK(rv.data()[0] == 1.0);
    }

    TEST_CASE("eval mode applies running stats as a fixed affine map") {
        Tensor in = Tensor::from_data({1, 1, 1, 2}, {3.0, 7.0});
        Tensor gamma = Tensor::full({1}, 2.0), beta = Tensor::zeros({1});
        Tensor rm = Tensor::full({1}, 5.0), rv = Tensor::full({1}, 4.0);
        Tensor out = batch_norm(in, gamma, beta, rm, rv, false, 0.1, 1e-12);
        CHECK(out.data()[0] == doctest::Approx(2.0 * (3.0 - 5.0) / 2.0).epsilon(1e-6));
        CHECK(out.data()[1] == doctest::Approx(2.0 * (7.0 - 5.0) / 2.0).epsilon(1e-6));
    }
}

TEST_SUITE("tensor.structure") {
    TEST_CASE("concat then slice recovers the operands exactly") {
        Rng rng(41);
        Tensor a = randn({2, 2, 3, 3}, rng), b = randn({2, 3, 3, 3}, rng), c = randn({2, 1, 3, 3}, rng);
        Tensor joined = concat_channels({a, b, c});
        CHECK(joined.shape() == Shape{2, 6, 3, 3});
        CHECK(slice_channels(joined, 0, 2).data() == a.data());
        CHECK(slice_channels(joined, 2, 5).data() == b.data());
        CHECK(slice_channels(joined, 5, 6).data() == c.data());
    }

    TEST_CASE("transpose and reshape round trips") {
        Rng rng(43);
        Tensor a = randn({3, 5}, rng);
        CHECK(transpose(transpose(a)).data() == a.data());
        CHECK(reshape(reshape(a, {15}), {3, 5}).data() == a.data());
        CHECK_THROWS_AS(reshape(a, {4, 4}), ContractViolation);
    }
}
