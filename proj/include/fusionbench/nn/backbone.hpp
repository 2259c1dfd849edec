// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fusionbench/nn/layers.hpp"

namespace fusionbench::nn {

/// Convolutional feature extractor ending in global average pooling:
/// (N, C, H, W) -> (N, out_features()).
template <typename T>
class Trunk : public Module<T> {
public:
    virtual int out_features() const noexcept = 0;
    virtual Conv2d<T>& first_conv() noexcept = 0;
};

template <typename T>
class Bottleneck final : public Module<T> {
public:
    static constexpr int expansion = 4;

    Bottleneck(int in_planes, int planes, int stride)
        : conv1_(in_planes, planes, 1, 1, 0, false), bn1_(planes),
          conv2_(planes, planes, 3, stride, 1, false), bn2_(planes),
          conv3_(planes, planes * expansion, 1, 1, 0, false), bn3_(planes * expansion) {
        if (stride != 1 || in_planes != planes * expansion) {
            down_conv_ = std::make_unique<Conv2d<T>>(in_planes, planes * expansion, 1, stride, 0, false);
            down_bn_ = std::make_unique<BatchNorm2d<T>>(planes * expansion);
        }
    }

    template <typename Rng>
    void init(Rng& rng) {
        conv1_.init_kaiming_fan_out(rng);
        conv2_.init_kaiming_fan_out(rng);
        conv3_.init_kaiming_fan_out(rng);
        if (down_conv_) down_conv_->init_kaiming_fan_out(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        Tensor<T> out = relu1_.forward(bn1_.forward(conv1_.forward(x, mode), mode), mode);
        out = relu2_.forward(bn2_.forward(conv2_.forward(out, mode), mode), mode);
        out = bn3_.forward(conv3_.forward(out, mode), mode);
        if (down_conv_) {
            out += down_bn_->forward(down_conv_->forward(x, mode), mode);
        } else {
            out += x;
        }
        return relu_out_.forward(out, mode);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = relu_out_.backward(grad_out);
        Tensor<T> skip = down_conv_ ? down_conv_->backward(down_bn_->backward(g)) : g;
        Tensor<T> main = conv3_.backward(bn3_.backward(g));
        main = conv2_.backward(bn2_.backward(relu2_.backward(main)));
        main = conv1_.backward(bn1_.backward(relu1_.backward(main)));
        main += skip;
        return main;
    }

    void parameters(const std::string& prefix, NamedTensors<T>& out) override {
        conv1_.parameters(join_name(prefix, "conv1"), out);
        bn1_.parameters(join_name(prefix, "bn1"), out);
        conv2_.parameters(join_name(prefix, "conv2"), out);
        bn2_.parameters(join_name(prefix, "bn2"), out);
        conv3_.parameters(join_name(prefix, "conv3"), out);
        bn3_.parameters(join_name(prefix, "bn3"), out);
        if (down_conv_) {
            down_conv_->parameters(join_name(prefix, "downsample.0"), out);
            down_bn_->parameters(join_name(prefix, "downsample.1"), out);
        }
    }
    void buffers(const std::string& prefix, NamedTensors<T>& out) override {
        bn1_.buffers(join_name(prefix, "bn1"), out);
        bn2_.buffers(join_name(prefix, "bn2"), out);
        bn3_.buffers(join_name(prefix, "bn3"), out);
        if (down_bn_) down_bn_->buffers(join_name(prefix, "downsample.1"), out);
    }

private:
    Conv2d<T> conv1_;
    BatchNorm2d<T> bn1_;
    ReLU<T> relu1_;
    Conv2d<T> conv2_;
    BatchNorm2d<T> bn2_;
    ReLU<T> relu2_;
    Conv2d<T> conv3_;
    BatchNorm2d<T> bn3_;
    std::unique_ptr<Conv2d<T>> down_conv_;
    std::unique_ptr<BatchNorm2d<T>> down_bn_;
    ReLU<T> relu_out_;
};

/// ResNet-50 (v1.5, stride on the 3x3 conv) without its classifier. Tensor
/// names follow the torchvision state_dict layout so exported ImageNet
/// weights load by name.
template <typename T>
class ResNet50Trunk final : public Trunk<T> {
public:
    template <typename Rng>
    explicit ResNet50Trunk(Rng& rng) : conv1_(3, 64, 7, 2, 3, false), bn1_(64), pool_(3, 2, 1) {
        constexpr std::array<int, 4> blocks{3, 4, 6, 3};
        constexpr std::array<int, 4> planes{64, 128, 256, 512};
        int in_planes = 64;
        for (std::size_t layer = 0; layer < 4; ++layer) {
            for (int b = 0; b < blocks[layer]; ++b) {
                const int stride = (b == 0 && layer > 0) ? 2 : 1;
                auto block = std::make_unique<Bottleneck<T>>(in_planes, planes[layer], stride);
                in_planes = planes[layer] * Bottleneck<T>::expansion;
                names_.push_back("layer" + std::to_string(layer + 1) + "." + std::to_string(b));
                blocks_.push_back(std::move(block));
            }
        }
        conv1_.init_kaiming_fan_out(rng);
        for (auto& b : blocks_) b->init(rng);
    }

    int out_features() const noexcept override { return 2048; }
    Conv2d<T>& first_conv() noexcept override { return conv1_; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        Tensor<T> out = pool_.forward(relu_.forward(bn1_.forward(conv1_.forward(x, mode), mode), mode), mode);
        for (auto& b : blocks_) out = b->forward(out, mode);
        return gap_.forward(out, mode);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = gap_.backward(grad_out);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
        return conv1_.backward(bn1_.backward(relu_.backward(pool_.backward(g))));
    }

    void parameters(const std::string& prefix, NamedTensors<T>& out) override {
        conv1_.parameters(join_name(prefix, "conv1"), out);
        bn1_.parameters(join_name(prefix, "bn1"), out);
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i]->parameters(join_name(prefix, names_[i]), out);
    }
    void buffers(const std::string& prefix, NamedTensors<T>& out) override {
        bn1_.buffers(join_name(prefix, "bn1"), out);
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i]->buffers(join_name(prefix, names_[i]), out);
    }

private:
    Conv2d<T> conv1_;
    BatchNorm2d<T> bn1_;
    ReLU<T> relu_;
    MaxPool2d<T> pool_;
    std::vector<std::unique_ptr<Bottleneck<T>>> blocks_;
    std::vector<std::string> names_;
    GlobalAvgPool<T> gap_;
};

/// Three stride-2 3x3 conv + ReLU blocks, then global average pooling.
/// Channel widths are width, 2*width, feature_dim.
template <typename T>
class TinyCnnTrunk final : public Trunk<T> {
public:
    template <typename Rng>
    TinyCnnTrunk(int feature_dim, int width, Rng& rng)
        : feature_dim_(feature_dim), conv1_(3, width, 3, 2, 1, true),
          conv2_(width, 2 * width, 3, 2, 1, true), conv3_(2 * width, feature_dim, 3, 2, 1, true) {
        conv1_.init_uniform_fan_in(rng);
        conv2_.init_uniform_fan_in(rng);
        conv3_.init_uniform_fan_in(rng);
    }

    int out_features() const noexcept override { return feature_dim_; }
    Conv2d<T>& first_conv() noexcept override { return conv1_; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
        Tensor<T> out = relu1_.forward(conv1_.forward(x, mode), mode);
        out = relu2_.forward(conv2_.forward(out, mode), mode);
        out = relu3_.forward(conv3_.forward(out, mode), mode);
        return gap_.forward(out, mode);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        Tensor<T> g = relu3_.backward(gap_.backward(grad_out));
        g = relu2_.backward(conv3_.backward(g));
        g = relu1_.backward(conv2_.backward(g));
        return conv1_.backward(g);
    }

    void parameters(const std::string& prefix, NamedTensors<T>& out) override {
        conv1_.parameters(join_name(prefix, "conv1"), out);
        conv2_.parameters(join_name(prefix, "conv2"), out);
        conv3_.parameters(join_name(prefix, "conv3"), out);
    }

private:
    int feature_dim_;
    Conv2d<T> conv1_;
    ReLU<T> relu1_;
    Conv2d<T> conv2_;
    ReLU<T> relu2_;
    Conv2d<T> conv3_;
    ReLU<T> relu3_;
    GlobalAvgPool<T> gap_;
};

}  // namespace fusionbench::nn
