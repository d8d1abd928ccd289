#pragma once

#include <cstdint>
#include <vector>

namespace dbgi {

// Token-level Levenshtein distance, unit cost for insert/delete/substitute.
int edit_distance(const std::vector<int>& reference, const std::vector<int>& hypothesis);

struct EvalReport {
    double exprate = 0.0;  // percent, exact-match fraction
    double wer = 0.0;      // percent, total edit distance / total reference tokens
    double le1 = 0.0;      // percent within 1 token edit
    double le2 = 0.0;
    double le3 = 0.0;
    std::vector<int> distances;  // per-sample edit distances

    void validate() const;  // exprate <= le1 <= le2 <= le3 <= 100
};

// Aggregates exact-match and <=k accuracies over prediction/reference pairs
// (body token sequences, no start/end markers).
EvalReport score_pairs(const std::vector<std::vector<int>>& references,
                       const std::vector<std::vector<int>>& hypotheses);

}  // namespace dbgi
