#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dbgi/tensor.hpp"

namespace dbgi::gradcheck {

struct CheckOptions {
    double step = 1e-5;       // central-difference h
    double tolerance = 1e-4;  // relative error bound
    int probes = 10;          // random coordinates compared per check
};

struct CheckResult {
    std::string name;
    bool passed = false;
    double max_rel_err = 0.0;
    std::string detail;
};

// Compares tape gradients of `build` (a scalar loss over the given leaves)
// against central finite differences at randomly probed coordinates.
// `build` must be a pure function of the leaf values.
CheckResult check_gradients(const std::string& name, std::vector<Tensor> leaves,
                            const std::function<Tensor(const std::vector<Tensor>&)>& build,
                            std::uint64_t seed, const CheckOptions& options = {});

// Every differentiable operation plus the composed model pieces.
std::vector<CheckResult> run_all(std::uint64_t seed);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace dbgi::gradcheck
