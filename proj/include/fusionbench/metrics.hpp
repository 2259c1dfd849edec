// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Classification metrics and across-trial aggregation.
//
// AUC is the unweighted macro average of one-vs-rest ROC AUCs over predicted
// class probabilities; tied scores count one half (Mann-Whitney convention).

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fusionbench/log.hpp"
#include "fusionbench/tensor.hpp"

namespace fusionbench {

inline constexpr const char* kAucDefinition =
    "AUC = unweighted macro average of one-vs-rest ROC AUC over predicted class probabilities (ties count 1/2)";

struct AucDetail {
    double macro = 0.0;
    /// Per class; nullopt where the class is absent from the labels.
    std::vector<std::optional<double>> per_class;
    int skipped_classes = 0;
};

/// One-vs-rest AUC for `positive` from mid-ranks of the scores.
inline double binary_auc(std::span<const double> scores, std::span<const int> labels, int positive) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == positive) {
                pos_rank_sum += mid_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("binary AUC needs positives and negatives");
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// `scores` is (n, K); `labels` in [0, K).
inline AucDetail auc_macro_detail(const Tensor<double>& scores, std::span<const int> labels) {
    if (scores.rank() != 2 || static_cast<std::size_t>(scores.dim(0)) != labels.size())
        throw std::invalid_argument("auc: scores must be (n, K) with n = labels.size()");
    const int n = scores.dim(0), k = scores.dim(1);
    std::vector<int> present(static_cast<std::size_t>(k), 0);
    for (int y : labels) {
        if (y < 0 || y >= k) throw std::invalid_argument("auc: label out of range");
        present[y] = 1;
    }
    const int n_present = std::accumulate(present.begin(), present.end(), 0);
    if (n_present < 2) throw std::invalid_argument("auc: labels contain fewer than two distinct classes");

    AucDetail out;
    out.per_class.resize(static_cast<std::size_t>(k));
    std::vector<double> column(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
        if (!present[c]) {
            ++out.skipped_classes;
            continue;
        }
        for (int i = 0; i < n; ++i) column[i] = scores.at(i, c);
        out.per_class[c] = binary_auc(column, labels, c);
        sum += *out.per_class[c];
    }
    if (out.skipped_classes > 0)
        log::warn("auc: " + std::to_string(out.skipped_classes) + " class(es) absent from labels were skipped");
    out.macro = sum / n_present;
    return out;
}

inline double auc_macro(const Tensor<double>& scores, std::span<const int> labels) {
    return auc_macro_detail(scores, labels).macro;
}

inline std::vector<int> argmax_rows(const Tensor<double>& scores) {
    std::vector<int> out(static_cast<std::size_t>(scores.dim(0)));
    for (int i = 0; i < scores.dim(0); ++i) {
        int best = 0;
        for (int c = 1; c < scores.dim(1); ++c)
            if (scores.at(i, c) > scores.at(i, best)) best = c;
        out[i] = best;
    }
    return out;
}

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    /// Set when the class was never predicted (precision reported as 0).
    bool precision_undefined = false;
    /// Set when the class never occurs in the labels (recall reported as 0).
    bool recall_undefined = false;
};

inline PrecisionRecall precision_recall(std::span<const int> predictions, std::span<const int> labels, int cls) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("predictions and labels differ in length");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pred = predictions[i] == cls, truth = labels[i] == cls;
        tp += pred && truth;
        fp += pred && !truth;
        fn += !pred && truth;
    }
    PrecisionRecall out;
    if (tp + fp == 0) {
        out.precision_undefined = true;
    } else {
        out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
        out.recall_undefined = true;
    } else {
        out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    return out;
}

/// Mean and two standard errors (sample std / sqrt(n)).
struct MeanSe {
    double mean = 0.0;
    double two_se = 0.0;
    std::size_t n = 0;
};

inline MeanSe aggregate_trials(std::span<const double> values) {
    if (values.size() < 2) throw std::invalid_argument("aggregate_trials needs at least 2 trials for a standard error");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / (n - 1.0));
    return {mean, 2.0 * sd / std::sqrt(n), values.size()};
}

/// Like aggregate_trials but reports a zero SE for a single value.
inline MeanSe aggregate_lenient(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("no values to aggregate");
    if (values.size() == 1) return {values.front(), 0.0, 1};
    return aggregate_trials(values);
}

}  // namespace fusionbench
