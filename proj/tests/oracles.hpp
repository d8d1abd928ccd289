#pragma once

// Independent reference computations for the test suites. Everything here is
// deliberately written as plain loops over plain doubles, sharing no code
// with the library paths it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

// cross-correlation, nested loops, zero padding
inline std::vector<double> conv2d(const std::vector<double>& in, std::int64_t n, std::int64_t c,
                                  std::int64_t h, std::int64_t w, const std::vector<double>& k,
                                  std::int64_t o, std::int64_t kh, std::int64_t kw,
                                  const std::vector<double>& bias, int stride, int padding,
                                  int dilation, std::int64_t& oh, std::int64_t& ow) {
    oh = (h + 2 * padding - dilation * (kh - 1) - 1) / stride + 1;
    ow = (w + 2 * padding - dilation * (kw - 1) - 1) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(n * o * oh * ow), 0.0);
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t f = 0; f < o; ++f)
            for (std::int64_t y = 0; y < oh; ++y)
                for (std::int64_t x = 0; x < ow; ++x) {
                    double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(f)];
                    for (std::int64_t ch = 0; ch < c; ++ch)
                        for (std::int64_t ky = 0; ky < kh; ++ky)
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t iy = y * stride - padding + ky * dilation;
                                const std::int64_t ix = x * stride - padding + kx * dilation;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += in[static_cast<std::size_t>(((b * c + ch) * h + iy) * w + ix)] *
                                       k[static_cast<std::size_t>(((f * c + ch) * kh + ky) * kw + kx)];
                            }
                    out[static_cast<std::size_t>(((b * o + f) * oh + y) * ow + x)] = acc;
                }
    return out;
}

inline std::vector<double> avg_pool(const std::vector<double>& in, std::int64_t n, std::int64_t c,
                                    std::int64_t h, std::int64_t w, int window, int stride,
                                    std::int64_t& oh, std::int64_t& ow) {
    oh = (h - window) / stride + 1;
    ow = (w - window) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(n * c * oh * ow), 0.0);
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t y = 0; y < oh; ++y)
                for (std::int64_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (int ky = 0; ky < window; ++ky)
                        for (int kx = 0; kx < window; ++kx)
                            acc += in[static_cast<std::size_t>(((b * c + ch) * h + y * stride + ky) * w +
                                                               x * stride + kx)];
                    out[static_cast<std::size_t>(((b * c + ch) * oh + y) * ow + x)] =
                        acc / (static_cast<double>(window) * window);
                }
    return out;
}

inline std::vector<double> matmul(const std::vector<double>& a, std::int64_t r, std::int64_t k,
                                  const std::vector<double>& b, std::int64_t c) {
    std::vector<double> out(static_cast<std::size_t>(r * c), 0.0);
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t t = 0; t < k; ++t)
            for (std::int64_t j = 0; j < c; ++j)
                out[static_cast<std::size_t>(i * c + j)] +=
                    a[static_cast<std::size_t>(i * k + t)] * b[static_cast<std::size_t>(t * c + j)];
    return out;
}

// two-pass per-channel mean/variance over all non-channel positions
inline void channel_stats(const std::vector<double>& in, std::int64_t n, std::int64_t c,
                          std::int64_t hw, std::vector<double>& mean, std::vector<double>& var) {
    mean.assign(static_cast<std::size_t>(c), 0.0);
    var.assign(static_cast<std::size_t>(c), 0.0);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t i = 0; i < hw; ++i)
                acc += in[static_cast<std::size_t>((b * c + ch) * hw + i)];
        mean[static_cast<std::size_t>(ch)] = acc / static_cast<double>(n * hw);
        double sq = 0.0;
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t i = 0; i < hw; ++i) {
                const double d = in[static_cast<std::size_t>((b * c + ch) * hw + i)] -
                                 mean[static_cast<std::size_t>(ch)];
                sq += d * d;
            }
        var[static_cast<std::size_t>(ch)] = sq / static_cast<double>(n * hw);
    }
}

// full-matrix Levenshtein, independent of the two-row implementation
inline int edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
    for (std::size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<int>(i);
    for (std::size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1,
                                 dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    return dp[n][m];
}

// scalar GRU step (n = in = context = 1), all four equations spelled out
struct ScalarGruWeights {
    double wz, wr, wh;   // input weights
    double uz, ur, uh;   // recurrent weights
    double cz, cr, ch;   // context weights
    double bz, br, bh;   // biases
    double wv = 0.0;     // auxiliary projection
    double s = 0.0;      // step size
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double scalar_gru(double x, double h_prev, double c, const ScalarGruWeights& w) {
    const double z = sigmoid(w.wz * x + w.uz * h_prev + w.cz * c + w.bz);
    const double r = sigmoid(w.wr * x + w.ur * h_prev + w.cr * c + w.br);
    const double cand = std::tanh(w.wh * x + r * (w.uh * h_prev) + w.ch * c + w.bh);
    return (1.0 - z) * h_prev + z * cand;
}

inline double scalar_gi_gru(double x, double h_prev, double c, const ScalarGruWeights& w,
                            double* v_out = nullptr) {
    const double v = w.s * (w.wv * x);
    if (v_out) *v_out = v;
    const double z = sigmoid(w.wz * x + w.uz * h_prev + v + w.cz * c + w.bz);
    const double r = sigmoid(w.wr * x + w.ur * h_prev + v + w.cr * c + w.br);
    const double cand = std::tanh(w.wh * x + r * (w.uh * h_prev + v) + w.ch * c + w.bh);
    return (1.0 - z) * h_prev + z * cand;
}

}  // namespace oracle
