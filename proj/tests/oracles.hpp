// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used as test oracles. None of these
// call into the library code they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "fusionbench/nn/layers.hpp"
#include "fusionbench/tensor.hpp"

namespace oracle {

/// Macro one-vs-rest AUC by exhaustive pair enumeration:
/// (concordant + 0.5 * tied) / pairs, averaged over classes present.
inline double brute_force_auc(const std::vector<std::vector<double>>& scores, const std::vector<int>& labels, int k) {
    double total = 0.0;
    int present = 0;
    for (int c = 0; c < k; ++c) {
        double num = 0.0, pairs = 0.0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] != c) continue;
            for (std::size_t j = 0; j < labels.size(); ++j) {
                if (labels[j] == c) continue;
                pairs += 1.0;
                if (scores[i][c] > scores[j][c]) num += 1.0;
                else if (scores[i][c] == scores[j][c]) num += 0.5;
            }
        }
        if (pairs > 0) {
            total += num / pairs;
            ++present;
        }
    }
    return total / present;
}

struct StopOutcome {
    int stop_epoch = 0;  // 1-indexed epoch after which training ends
    int best_epoch = 0;
};

/// "Stop once the AUC has been less than the best for more than `patience`
/// epochs", re-derived at every epoch from the prefix alone.
inline StopOutcome simulate_stopping(const std::vector<double>& aucs, int patience, int max_epochs) {
    const int n = std::min<int>(static_cast<int>(aucs.size()), max_epochs);
    for (int e = 1; e <= n; ++e) {
        const double best = *std::max_element(aucs.begin(), aucs.begin() + e);
        int b = 0;
        while (aucs[b] != best) ++b;  // first epoch (0-based) attaining the best
        int below = 0;
        for (int j = b + 1; j < e; ++j) below += aucs[j] < best;
        if (below > patience || e == n) return {e, b + 1};
    }
    return {0, 0};
}

/// Direct-loop 2D convolution: x (N,C,H,W), w (O,C,k,k), optional bias.
inline fusionbench::Tensor<double> conv2d(const fusionbench::Tensor<double>& x, const fusionbench::Tensor<double>& w,
                                          const std::vector<double>& bias, int stride, int pad) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int o = w.dim(0), k = w.dim(2);
    const int ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
    fusionbench::Tensor<double> y({n, o, ho, wo});
    for (int s = 0; s < n; ++s)
        for (int f = 0; f < o; ++f)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[f];
                    for (int ch = 0; ch < c; ++ch)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                                acc += x.at(s, ch, iy, ix) * w.at(f, ch, ky, kx);
                            }
                    y.at(s, f, oy, ox) = acc;
                }
    return y;
}

template <typename T, typename Rng>
void fill_normal(fusionbench::Tensor<T>& t, Rng& rng, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    for (auto& v : t.values()) v = static_cast<T>(d(rng));
}

/// Central difference of f at every entry of `target`.
inline std::vector<double> numeric_gradient(fusionbench::Tensor<double>& target, const std::function<double()>& f,
                                            double h = 1e-6) {
    std::vector<double> g(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double keep = target[i];
        target[i] = keep + h;
        const double up = f();
        target[i] = keep - h;
        const double down = f();
        target[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
    return worst;
}

}  // namespace oracle
