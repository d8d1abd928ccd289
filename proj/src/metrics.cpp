#include "dbgi/metrics.hpp"

#include <algorithm>

#include "dbgi/tensor.hpp"

namespace dbgi {

int edit_distance(const std::vector<int>& reference, const std::vector<int>& hypothesis) {
    const std::size_t n = reference.size(), m = hypothesis.size();
    std::vector<int> prev(m + 1), curr(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        curr[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            const int subst = prev[j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
            curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, subst});
        }
        std::swap(prev, curr);
    }
    return prev[m];
}

void EvalReport::validate() const {
    if (!(exprate <= le1 + 1e-9 && le1 <= le2 + 1e-9 && le2 <= le3 + 1e-9 && le3 <= 100.0 + 1e-9))
        throw ContractViolation("metric nesting violated: exprate <= le1 <= le2 <= le3 <= 100");
}

EvalReport score_pairs(const std::vector<std::vector<int>>& references,
                       const std::vector<std::vector<int>>& hypotheses) {
    if (references.empty() || references.size() != hypotheses.size())
        throw ContractViolation("score_pairs: reference/hypothesis count mismatch or empty");
    EvalReport report;
    std::size_t exact = 0, within1 = 0, within2 = 0, within3 = 0;
    std::int64_t total_distance = 0, total_tokens = 0;
    for (std::size_t i = 0; i < references.size(); ++i) {
        const int d = edit_distance(references[i], hypotheses[i]);
        report.distances.push_back(d);
        if (d == 0) ++exact;
        if (d <= 1) ++within1;
        if (d <= 2) ++within2;
        if (d <= 3) ++within3;
        total_distance += d;
        total_tokens += static_cast<std::int64_t>(references[i].size());
    }
    const double count = static_cast<double>(references.size());
    report.exprate = 100.0 * static_cast<double>(exact) / count;
    report.le1 = 100.0 * static_cast<double>(within1) / count;
    report.le2 = 100.0 * static_cast<double>(within2) / count;
    report.le3 = 100.0 * static_cast<double>(within3) / count;
    report.wer = total_tokens > 0
                     ? 100.0 * static_cast<double>(total_distance) / static_cast<double>(total_tokens)
                     : 0.0;
    report.validate();
    return report;
}

}  // namespace dbgi
