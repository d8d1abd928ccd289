#include <doctest.h>

#include <cmath>

#include "dbgi/gradcheck.hpp"
#include "dbgi/rng.hpp"
#include "dbgi/tensor.hpp"

using namespace dbgi;

TEST_SUITE("autodiff") {
    TEST_CASE("backward requires a scalar") {
        Tensor v = Tensor::zeros({3}).set_requires_grad(true);
        Tensor doubled = scale(v, 2.0);
        CHECK_THROWS_AS(backward(doubled), ContractViolation);
    }

    TEST_CASE("grad of sum(W x) is the input, broadcast over rows") {
        Tensor w = Tensor::from_data({2, 3}, {1, 1, 1, 1, 1, 1}).set_requires_grad(true);
        Tensor x = Tensor::from_data({3}, {2.0, -1.0, 0.5});
        Tensor loss = sum(matmul(w, x));
        backward(loss);
        REQUIRE(w.has_grad());
        // d/dW_ij sum_i (W x)_i = x_j for every row i
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(w.grad()[static_cast<std::size_t>(i * 3 + j)] ==
                      doctest::Approx(x.data()[static_cast<std::size_t>(j)]));
    }

    TEST_CASE("parameters off the path receive no grad") {
        Tensor used = Tensor::from_data({2}, {1.0, 2.0}).set_requires_grad(true);
        Tensor unused = Tensor::from_data({2}, {3.0, 4.0}).set_requires_grad(true);
        backward(sum(mul(used, used)));
        CHECK(used.has_grad());
        CHECK_FALSE(unused.has_grad());
    }

    TEST_CASE("grads accumulate across backward calls and clear on zero_grad") {
        Tensor v = Tensor::from_data({2}, {1.0, 1.0}).set_requires_grad(true);
        backward(sum(v));
        backward(sum(v));
        CHECK(v.grad()[0] == doctest::Approx(2.0));
        v.zero_grad();
        CHECK_FALSE(v.has_grad());
    }

    TEST_CASE("diamond-shaped reuse accumulates both paths") {
        Tensor x = Tensor::scalar(3.0).set_requires_grad(true);
        Tensor y = add(mul(x, x), scale(x, 2.0));  // x^2 + 2x -> dy/dx = 2x + 2 = 8
        backward(y);
        CHECK(x.grad()[0] == doctest::Approx(8.0));
    }

    TEST_CASE("NoGradGuard suppresses recording") {
        Tensor v = Tensor::from_data({2}, {1.0, 2.0}).set_requires_grad(true);
        {
            NoGradGuard guard;
            Tensor out = scale(v, 2.0);
            CHECK_FALSE(out.requires_grad());
        }
        CHECK(scale(v, 2.0).requires_grad());
    }

    TEST_CASE("every operation passes central finite differences") {
        const auto results = gradcheck::run_all(20240817);
        for (const auto& r : results) {
            INFO(r.name, ": ", r.detail, " (max rel err ", r.max_rel_err, ")");
            CHECK(r.passed);
        }
        CHECK(results.size() > 25);  // the suite actually covers the op set
    }
}
