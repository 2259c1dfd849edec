// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "fusionbench/nn/layers.hpp"

namespace fusionbench::nn {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction, matching the torch.optim.Adam update rule.
template <typename T>
class Adam {
public:
    Adam(NamedTensors<T> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
        for (const auto& p : params_) {
            m_.emplace_back(p.value->size(), 0.0);
            v_.emplace_back(p.value->size(), 0.0);
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.grad->fill(T(0));
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(opt_.beta1, t_);
        const double c2 = std::sqrt(1.0 - std::pow(opt_.beta2, t_));
        const double step_size = opt_.learning_rate / c1;
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& value = *params_[k].value;
            const auto& grad = *params_[k].grad;
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < value.size(); ++i) {
                const double g = grad[i];
                m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g;
                v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g;
                value[i] -= static_cast<T>(step_size * m[i] / (std::sqrt(v[i]) / c2 + opt_.eps));
            }
        }
    }

    long steps() const noexcept { return t_; }

private:
    NamedTensors<T> params_;
    AdamOptions opt_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

}  // namespace fusionbench::nn
