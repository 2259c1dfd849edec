// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fusionbench {

inline std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

/// Dense row-major array with a dynamic shape. NCHW for images, (N, F) for
/// feature matrices.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(std::vector<int> shape, T fill = T(0))
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    Tensor(std::initializer_list<int> shape, T fill = T(0))
        : Tensor(std::vector<int>(shape), fill) {}

    Tensor(std::vector<int> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_)) {
            throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_string(shape_));
        }
    }

    const std::vector<int>& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(int i, int j) { return data_[offset2(i, j)]; }
    const T& at(int i, int j) const { return data_[offset2(i, j)]; }
    T& at(int n, int c, int h, int w) { return data_[offset4(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const { return data_[offset4(n, c, h, w)]; }

    /// Contiguous slab for leading index `n` (sample n of a batch).
    std::span<T> slab(int n) {
        const std::size_t stride = data_.size() / static_cast<std::size_t>(shape_.at(0));
        return {data_.data() + stride * static_cast<std::size_t>(n), stride};
    }
    std::span<const T> slab(int n) const {
        const std::size_t stride = data_.size() / static_cast<std::size_t>(shape_.at(0));
        return {data_.data() + stride * static_cast<std::size_t>(n), stride};
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != data_.size()) {
            throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " +
                                        shape_string(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    Tensor& operator+=(const Tensor& other) {
        require_same_shape(other, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    bool operator==(const Tensor& other) const = default;

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

private:
    std::size_t offset2(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(shape_[1]) +
               static_cast<std::size_t>(j);
    }
    std::size_t offset4(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }
    void require_same_shape(const Tensor& other, const char* op) const {
        if (other.shape_ != shape_) {
            throw std::invalid_argument(std::string("shape mismatch in ") + op + ": " +
                                        shape_string(shape_) + " vs " + shape_string(other.shape_));
        }
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

/// Stack equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>* const> items) {
    if (items.empty()) throw std::invalid_argument("stack of zero tensors");
    std::vector<int> shape{static_cast<int>(items.size())};
    const auto& first = items.front()->shape();
    shape.insert(shape.end(), first.begin(), first.end());
    Tensor<T> out(shape);
    const std::size_t stride = items.front()->size();
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i]->shape() != first) {
            throw std::invalid_argument("stack: shape " + shape_string(items[i]->shape()) +
                                        " differs from " + shape_string(first));
        }
        std::copy(items[i]->values().begin(), items[i]->values().end(),
                  out.data() + i * stride);
    }
    return out;
}

/// Concatenate (N, F_i) matrices along the feature axis.
template <typename T>
Tensor<T> concat_features(std::span<const Tensor<T>* const> parts) {
    const int n = parts.front()->dim(0);
    int width = 0;
    for (const auto* p : parts) {
        if (p->rank() != 2 || p->dim(0) != n) throw std::invalid_argument("concat_features: bad part");
        width += p->dim(1);
    }
    Tensor<T> out({n, width});
    for (int i = 0; i < n; ++i) {
        int col = 0;
        for (const auto* p : parts) {
            for (int j = 0; j < p->dim(1); ++j) out.at(i, col + j) = p->at(i, j);
            col += p->dim(1);
        }
    }
    return out;
}

/// Inverse of concat_features for the given widths.
template <typename T>
std::vector<Tensor<T>> split_features(const Tensor<T>& x, std::span<const int> widths) {
    std::vector<Tensor<T>> out;
    int col = 0;
    for (int w : widths) {
        Tensor<T> part({x.dim(0), w});
        for (int i = 0; i < x.dim(0); ++i)
            for (int j = 0; j < w; ++j) part.at(i, j) = x.at(i, col + j);
        out.push_back(std::move(part));
        col += w;
    }
    return out;
}

}  // namespace fusionbench
