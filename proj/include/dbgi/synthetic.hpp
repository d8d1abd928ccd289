#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbgi/dataset.hpp"
#include "dbgi/latex.hpp"

namespace dbgi {

struct SyntheticConfig {
    std::uint64_t seed = 0;
    int count = 1;
    int grammar_depth = 2;
    int target_height = 64;
    int stroke_width = 2;

    void validate() const;
};

// Token set the generator can emit (atoms plus structural tokens).
Vocabulary synthetic_vocabulary();

// Seeded synthetic expression corpus: samples a small LaTeX grammar (digits,
// letters, operators, fractions, roots, scripts) to the configured depth,
// renders every symbol from a stroke-template library with per-glyph affine
// jitter and point noise, and rasterizes the result. Sample i draws all of
// its randomness from the stream (seed, i), so any subset regenerates
// identically. Top-level sequence lengths are steered across the 1-35 token
// range (seven 5-wide buckets, cycling with the sample index).
std::vector<Sample> generate_synthetic(const SyntheticConfig& config, const Vocabulary& vocab);

// Single expression for tests and tooling.
Sample generate_sample(const SyntheticConfig& config, std::uint64_t index, const Vocabulary& vocab);

}  // namespace dbgi
