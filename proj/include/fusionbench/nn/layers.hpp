// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Layer primitives with hand-written backward passes. Every layer caches what
// it needs from the most recent training-mode forward call; backward must be
// called at most once per forward.

#pragma once

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fusionbench/tensor.hpp"

namespace fusionbench::nn {

enum class Mode { train, eval };

template <typename T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    explicit Parameter(std::vector<int> shape) : value(shape), grad(shape) {}

    void reset(Tensor<T> v) {
        grad = Tensor<T>(v.shape());
        value = std::move(v);
    }
};

/// Named handle into a module's state; `grad` is null for buffers.
template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
};

template <typename T>
using NamedTensors = std::vector<NamedTensor<T>>;

template <typename T>
class Module {
public:
    virtual ~Module() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual void parameters(const std::string& /*prefix*/, NamedTensors<T>& /*out*/) {}
    virtual void buffers(const std::string& /*prefix*/, NamedTensors<T>& /*out*/) {}
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
    return prefix.empty() ? leaf : prefix + "." + leaf;
}

// ---------------------------------------------------------------------------

template <typename T>
class Conv2d final : public Module<T> {
public:
    Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias)
        : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding),
          weight_({out_channels, in_channels, kernel, kernel}) {
        if (bias) bias_ = std::make_unique<Parameter<T>>(std::vector<int>{out_channels});
    }

    int in_channels() const noexcept { return in_; }
    int out_channels() const noexcept { return out_; }
    int kernel() const noexcept { return k_; }
    Parameter<T>& weight() noexcept { return weight_; }
    const Parameter<T>& weight() const noexcept { return weight_; }
    Parameter<T>* bias() noexcept { return bias_.get(); }

    /// Replace the kernel, possibly with a different input-channel count.
    void set_weight(Tensor<T> w) {
        if (w.rank() != 4 || w.dim(0) != out_ || w.dim(2) != k_ || w.dim(3) != k_) {
            throw std::invalid_argument("conv weight shape " + shape_string(w.shape()) +
                                        " incompatible with layer");
        }
        in_ = w.dim(1);
        weight_.reset(std::move(w));
    }

    template <typename Rng>
    void init_kaiming_fan_out(Rng& rng) {
        const double std = std::sqrt(2.0 / (out_ * k_ * k_));
        std::normal_distribution<double> dist(0.0, std);
        for (auto& v : weight_.value.values()) v = static_cast<T>(dist(rng));
        if (bias_) bias_->value.fill(T(0));
    }

    template <typename Rng>
    void init_uniform_fan_in(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_ * k_ * k_));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : weight_.value.values()) v = static_cast<T>(dist(rng));
        if (bias_)
            for (auto& v : bias_->value.values()) v = static_cast<T>(dist(rng));
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        if (x.rank() != 4 || x.dim(1) != in_) {
            throw std::invalid_argument("conv expects (N," + std::to_string(in_) +
                                        ",H,W) input, got " + shape_string(x.shape()));
        }
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int ho = out_size(h), wo = out_size(w);
        Tensor<T> y({n, out_, ho, wo});
        const int patch = in_ * k_ * k_;
        ConstMatrixMap<T> wmat(weight_.value.data(), out_, patch);
        std::vector<T> col;
        for (int s = 0; s < n; ++s) {
            const T* src = x.slab(s).data();
            MatrixMap<T> ymat(y.slab(s).data(), out_, ho * wo);
            if (is_pointwise()) {
                ymat.noalias() = wmat * ConstMatrixMap<T>(src, in_, h * w);
            } else {
                im2col(src, h, w, ho, wo, col);
                ymat.noalias() = wmat * ConstMatrixMap<T>(col.data(), patch, ho * wo);
            }
            if (bias_) {
                for (int o = 0; o < out_; ++o) ymat.row(o).array() += bias_->value[o];
            }
        }
        if (mode == Mode::train) input_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const Tensor<T>& x = input_;
        const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
        const int ho = grad_out.dim(2), wo = grad_out.dim(3);
        const int patch = in_ * k_ * k_;
        Tensor<T> dx(x.shape());
        ConstMatrixMap<T> wmat(weight_.value.data(), out_, patch);
        MatrixMap<T> dw(weight_.grad.data(), out_, patch);
        std::vector<T> col, dcol(static_cast<std::size_t>(patch) * ho * wo);
        for (int s = 0; s < n; ++s) {
            ConstMatrixMap<T> dy(grad_out.slab(s).data(), out_, ho * wo);
            if (bias_) {
                for (int o = 0; o < out_; ++o) bias_->grad[o] += dy.row(o).sum();
            }
            if (is_pointwise()) {
                dw.noalias() += dy * ConstMatrixMap<T>(x.slab(s).data(), in_, h * w).transpose();
                MatrixMap<T>(dx.slab(s).data(), in_, h * w).noalias() = wmat.transpose() * dy;
            } else {
                im2col(x.slab(s).data(), h, w, ho, wo, col);
                dw.noalias() += dy * ConstMatrixMap<T>(col.data(), patch, ho * wo).transpose();
                MatrixMap<T>(dcol.data(), patch, ho * wo).noalias() = wmat.transpose() * dy;
                col2im(dcol, h, w, ho, wo, dx.slab(s).data());
            }
        }
        input_ = Tensor<T>();
        return dx;
    }

    void parameters(const std::string& prefix, NamedTensors<T>& out) override {
        out.push_back({join_name(prefix, "weight"), &weight_.value, &weight_.grad});
        if (bias_) out.push_back({join_name(prefix, "bias"), &bias_->value, &bias_->grad});
    }

private:
    bool is_pointwise() const noexcept { return k_ == 1 && stride_ == 1 && pad_ == 0; }
    int out_size(int in) const noexcept { return (in + 2 * pad_ - k_) / stride_ + 1; }

    void im2col(const T* src, int h, int w, int ho, int wo, std::vector<T>& col) const {
        col.assign(static_cast<std::size_t>(in_) * k_ * k_ * ho * wo, T(0));
        std::size_t row = 0;
        for (int c = 0; c < in_; ++c) {
            const T* plane = src + static_cast<std::size_t>(c) * h * w;
            for (int ki = 0; ki < k_; ++ki) {
                for (int kj = 0; kj < k_; ++kj, ++row) {
                    T* dst = col.data() + row * ho * wo;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride_ - pad_ + ki;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride_ - pad_ + kj;
                            if (ix >= 0 && ix < w) dst[oy * wo + ox] = plane[iy * w + ix];
                        }
                    }
                }
            }
        }
    }

    void col2im(const std::vector<T>& col, int h, int w, int ho, int wo, T* dst) const {
        std::size_t row = 0;
        for (int c = 0; c < in_; ++c) {
            T* plane = dst + static_cast<std::size_t>(c) * h * w;
            for (int ki = 0; ki < k_; ++ki) {
                for (int kj = 0; kj < k_; ++kj, ++row) {
                    const T* srcrow = col.data() + row * ho * wo;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride_ - pad_ + ki;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride_ - pad_ + kj;
                            if (ix >= 0 && ix < w) plane[iy * w + ix] += srcrow[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }

    int in_, out_, k_, stride_, pad_;
    Parameter<T> weight_;
    std::unique_ptr<Parameter<T>> bias_;
    Tensor<T> input_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Linear final : public Module<T> {
public:
    Linear(int in_features, int out_features)
        : in_(in_features), out_(out_features), weight_({out_features, in_features}),
          bias_({out_features}) {}

    int in_features() const noexcept { return in_; }
    int out_features() const noexcept { return out_; }
    Parameter<T>& weight() noexcept { return weight_; }
    Parameter<T>& bias() noexcept { return bias_; }

    template <typename Rng>
    void init_uniform_fan_in(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : weight_.value.values()) v = static_cast<T>(dist(rng));
        for (auto& v : bias_.value.values()) v = static_cast<T>(dist(rng));
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        if (x.rank() != 2 || x.dim(1) != in_) {
            throw std::invalid_argument("linear expects (N," + std::to_string(in_) +
                                        ") input, got " + shape_string(x.shape()));
        }
        const int n = x.dim(0);
        Tensor<T> y({n, out_});
        MatrixMap<T> ymat(y.data(), n, out_);
        ymat.noalias() = ConstMatrixMap<T>(x.data(), n, in_) *
                         ConstMatrixMap<T>(weight_.value.data(), out_, in_).transpose();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < out_; ++j) ymat(i, j) += bias_.value[j];
        if (mode == Mode::train) input_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const int n = input_.dim(0);
        ConstMatrixMap<T> dy(grad_out.data(), n, out_);
        ConstMatrixMap<T> x(input_.data(), n, in_);
        MatrixMap<T>(weight_.grad.data(), out_, in_).noalias() += dy.transpose() * x;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < out_; ++j) bias_.grad[j] += dy(i, j);
        Tensor<T> dx({n, in_});
        MatrixMap<T>(dx.data(), n, in_).noalias() =
            dy * ConstMatrixMap<T>(weight_.value.data(), out_, in_);
        input_ = Tensor<T>();
        return dx;
    }

    void parameters(const std::string& prefix, NamedTensors<T>& out) override {
        out.push_back({join_name(prefix, "weight"), &weight_.value, &weight_.grad});
        out.push_back({join_name(prefix, "bias"), &bias_.value, &bias_.grad});
    }

private:
    int in_, out_;
    Parameter<T> weight_;
    Parameter<T> bias_;
    Tensor<T> input_;
};

// ---------------------------------------------------------------------------

template <typename T>
class BatchNorm2d final : public Module<T> {
public:
    explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5)
        : c_(channels), momentum_(momentum), eps_(eps), weight_({channels}), bias_({channels}),
          running_mean_({channels}), running_var_({channels}, T(1)) {
        weight_.value.fill(T(1));
    }

    Parameter<T>& weight() noexcept { return weight_; }
    Parameter<T>& bias() noexcept { return bias_; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        const int n = x.dim(0), hw = x.dim(2) * x.dim(3);
        Tensor<T> y(x.shape());
        const double count = static_cast<double>(n) * hw;
        if (mode == Mode::train) {
            xhat_ = Tensor<T>(x.shape());
            inv_std_.assign(static_cast<std::size_t>(c_), T(0));
        }
        for (int c = 0; c < c_; ++c) {
            double mean, var;
            if (mode == Mode::train) {
                double sum = 0.0;
                for (int s = 0; s < n; ++s) {
                    const T* p = x.data() + (static_cast<std::size_t>(s) * c_ + c) * hw;
                    for (int i = 0; i < hw; ++i) sum += p[i];
                }
                mean = sum / count;
                double sq = 0.0;
                for (int s = 0; s < n; ++s) {
                    const T* p = x.data() + (static_cast<std::size_t>(s) * c_ + c) * hw;
                    for (int i = 0; i < hw; ++i) sq += (p[i] - mean) * (p[i] - mean);
                }
                var = sq / count;
                const double unbiased = count > 1 ? sq / (count - 1) : var;
                running_mean_[c] = static_cast<T>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
                running_var_[c] = static_cast<T>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
            } else {
                mean = running_mean_[c];
                var = running_var_[c];
            }
            const double inv_std = 1.0 / std::sqrt(var + eps_);
            if (mode == Mode::train) inv_std_[c] = static_cast<T>(inv_std);
            const T g = weight_.value[c], b = bias_.value[c];
            for (int s = 0; s < n; ++s) {
                const std::size_t off = (static_cast<std::size_t>(s) * c_ + c) * hw;
                for (int i = 0; i < hw; ++i) {
                    const T xh = static_cast<T>((x[off + i] - mean) * inv_std);
                    if (mode == Mode::train) xhat_[off + i] = xh;
                    y[off + i] = g * xh + b;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        const int n = grad_out.dim(0), hw = grad_out.dim(2) * grad_out.dim(3);
        const double count = static_cast<double>(n) * hw;
        Tensor<T> dx(grad_out.shape());
        for (int c = 0; c < c_; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int s = 0; s < n; ++s) {
                const std::size_t off = (static_cast<std::size_t>(s) * c_ + c) * hw;
                for (int i = 0; i < hw; ++i) {
                    sum_dy += grad_out[off + i];
                    sum_dy_xhat += grad_out[off + i] * xhat_[off + i];
                }
            }
            weight_.grad[c] += static_cast<T>(sum_dy_xhat);
            bias_.grad[c] += static_cast<T>(sum_dy);
            const double scale = weight_.value[c] * inv_std_[c] / count;
            for (int s = 0; s < n; ++s) {
                const std::size_t off = (static_cast<std::size_t>(s) * c_ + c) * hw;
                for (int i = 0; i < hw; ++i) {
                    dx[off + i] = static_cast<T>(
                        scale * (count * grad_out[off + i] - sum_dy - xhat_[off + i] * sum_dy_xhat));
                }
            }
        }
        xhat_ = Tensor<T>();
        return dx;
    }

    void parameters(const std::string& prefix, NamedTensors<T>& out) override {
        out.push_back({join_name(prefix, "weight"), &weight_.value, &weight_.grad});
        out.push_back({join_name(prefix, "bias"), &bias_.value, &bias_.grad});
    }
    void buffers(const std::string& prefix, NamedTensors<T>& out) override {
        out.push_back({join_name(prefix, "running_mean"), &running_mean_, nullptr});
        out.push_back({join_name(prefix, "running_var"), &running_var_, nullptr});
    }

private:
    int c_;
    double momentum_, eps_;
    Parameter<T> weight_, bias_;
    Tensor<T> running_mean_, running_var_;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

// ---------------------------------------------------------------------------

template <typename T>
class ReLU final : public Module<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
        if (mode == Mode::train) output_ = y;
        return y;
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> dx(grad_out.shape());
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = output_[i] > T(0) ? grad_out[i] : T(0);
        output_ = Tensor<T>();
        return dx;
    }

private:
    Tensor<T> output_;
};

template <typename T>
class MaxPool2d final : public Module<T> {
public:
    MaxPool2d(int kernel, int stride, int padding) : k_(kernel), stride_(stride), pad_(padding) {}

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        const int ho = (h + 2 * pad_ - k_) / stride_ + 1, wo = (w + 2 * pad_ - k_) / stride_ + 1;
        Tensor<T> y({n, c, ho, wo});
        if (mode == Mode::train) {
            argmax_.assign(y.size(), 0);
            input_shape_ = x.shape();
        }
        std::size_t o = 0;
        for (int p = 0; p < n * c; ++p) {
            const std::size_t base = static_cast<std::size_t>(p) * h * w;
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_i = base;
                    for (int ki = 0; ki < k_; ++ki) {
                        const int iy = oy * stride_ - pad_ + ki;
                        if (iy < 0 || iy >= h) continue;
                        for (int kj = 0; kj < k_; ++kj) {
                            const int ix = ox * stride_ - pad_ + kj;
                            if (ix < 0 || ix >= w) continue;
                            const std::size_t i = base + static_cast<std::size_t>(iy) * w + ix;
                            if (x[i] > best) {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    y[o] = best;
                    if (mode == Mode::train) argmax_[o] = best_i;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> dx(input_shape_);
        for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
        argmax_.clear();
        return dx;
    }

private:
    int k_, stride_, pad_;
    std::vector<std::size_t> argmax_;
    std::vector<int> input_shape_;
};

/// (N, C, H, W) -> (N, C) spatial mean.
template <typename T>
class GlobalAvgPool final : public Module<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        Tensor<T> y({n, c});
        for (int p = 0; p < n * c; ++p) {
            double sum = 0.0;
            const T* src = x.data() + static_cast<std::size_t>(p) * hw;
            for (int i = 0; i < hw; ++i) sum += src[i];
            y[p] = static_cast<T>(sum / hw);
        }
        if (mode == Mode::train) input_shape_ = x.shape();
        return y;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> dx(input_shape_);
        const int hw = input_shape_[2] * input_shape_[3];
        for (std::size_t p = 0; p < grad_out.size(); ++p) {
            const T g = grad_out[p] / static_cast<T>(hw);
            std::fill_n(dx.data() + p * hw, hw, g);
        }
        return dx;
    }

private:
    std::vector<int> input_shape_;
};

// ---------------------------------------------------------------------------

/// Row-wise softmax of an (N, K) matrix, max-shifted.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
    Tensor<T> out(logits.shape());
    const int n = logits.dim(0), k = logits.dim(1);
    for (int i = 0; i < n; ++i) {
        T mx = logits.at(i, 0);
        for (int j = 1; j < k; ++j) mx = std::max(mx, logits.at(i, j));
        T sum = 0;
        for (int j = 0; j < k; ++j) {
            out.at(i, j) = std::exp(logits.at(i, j) - mx);
            sum += out.at(i, j);
        }
        for (int j = 0; j < k; ++j) out.at(i, j) /= sum;
    }
    return out;
}

/// Backward of row-wise softmax given its output `p` and upstream grad `dp`.
template <typename T>
Tensor<T> softmax_rows_backward(const Tensor<T>& p, const Tensor<T>& dp) {
    Tensor<T> dz(p.shape());
    const int n = p.dim(0), k = p.dim(1);
    for (int i = 0; i < n; ++i) {
        T dot = 0;
        for (int j = 0; j < k; ++j) dot += p.at(i, j) * dp.at(i, j);
        for (int j = 0; j < k; ++j) dz.at(i, j) = p.at(i, j) * (dp.at(i, j) - dot);
    }
    return dz;
}

template <typename T>
std::size_t parameter_count(Module<T>& m) {
    NamedTensors<T> params;
    m.parameters("", params);
    std::size_t n = 0;
    for (const auto& p : params) n += p.value->size();
    return n;
}

}  // namespace fusionbench::nn
