// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Early fusion, late fusion and mixture-of-experts classifiers over thermal,
// RGB and elevation tiles.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionbench/io/tensor_archive.hpp"
#include "fusionbench/nn/backbone.hpp"
#include "fusionbench/nn/layers.hpp"
#include "fusionbench/tensor.hpp"
#include "fusionbench/types.hpp"

namespace fusionbench {

enum class Strategy { early, late, moe };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::early: return "early";
        case Strategy::late: return "late";
        case Strategy::moe: return "moe";
    }
    return "?";
}

inline Strategy parse_strategy(std::string_view s) {
    if (s == "early") return Strategy::early;
    if (s == "late") return Strategy::late;
    if (s == "moe") return Strategy::moe;
    throw std::invalid_argument("unknown strategy '" + std::string(s) + "' (expected early, late or moe)");
}

inline constexpr std::array<Strategy, 3> kStrategies{Strategy::early, Strategy::late, Strategy::moe};

enum class BackboneFamily { paper_resnet50, tiny_cnn };

struct BackboneSpec {
    BackboneFamily family = BackboneFamily::paper_resnet50;
    bool pretrained = false;
    int feature_dim = 2048;
    /// First conv width of tiny_cnn; ignored for paper_resnet50.
    int tiny_width = 8;

    void validate() const {
        if (feature_dim <= 0) throw std::invalid_argument("backbone feature_dim must be positive");
        if (family == BackboneFamily::paper_resnet50 && feature_dim != 2048)
            throw std::invalid_argument("paper_resnet50 has feature_dim 2048");
        if (family == BackboneFamily::tiny_cnn && pretrained)
            throw std::invalid_argument("pretrained weights exist only for paper_resnet50");
        if (tiny_width <= 0) throw std::invalid_argument("tiny_width must be positive");
    }
};

struct FusionModelSpec {
    Strategy strategy = Strategy::early;
    BackboneSpec backbone;
    int num_classes = kNumClasses;
    int per_modality_feature_dim = 256;
    int gate_hidden_dim = 256;
    /// Gate consumes a gradient-stopped copy of the expert features.
    bool detach_gate_input = false;

    int backbone_count() const noexcept { return strategy == Strategy::early ? 1 : 3; }

    void validate() const {
        backbone.validate();
        if (num_classes <= 0 || per_modality_feature_dim <= 0 || gate_hidden_dim <= 0)
            throw std::invalid_argument("model dimensions must be positive");
    }
};

inline std::string to_string(BackboneFamily f) {
    return f == BackboneFamily::paper_resnet50 ? "paper_resnet50" : "tiny_cnn";
}

inline BackboneFamily parse_backbone_family(std::string_view s) {
    if (s == "paper_resnet50") return BackboneFamily::paper_resnet50;
    if (s == "tiny_cnn") return BackboneFamily::tiny_cnn;
    throw std::invalid_argument("unknown backbone family '" + std::string(s) + "'");
}

inline nlohmann::json to_json(const FusionModelSpec& s) {
    return {{"strategy", to_string(s.strategy)},
            {"backbone",
             {{"family", to_string(s.backbone.family)},
              {"pretrained", s.backbone.pretrained},
              {"feature_dim", s.backbone.feature_dim},
              {"tiny_width", s.backbone.tiny_width}}},
            {"num_classes", s.num_classes},
            {"per_modality_feature_dim", s.per_modality_feature_dim},
            {"gate_hidden_dim", s.gate_hidden_dim},
            {"detach_gate_input", s.detach_gate_input}};
}

inline FusionModelSpec model_spec_from_json(const nlohmann::json& j) {
    FusionModelSpec s;
    s.strategy = parse_strategy(j.at("strategy").get<std::string>());
    const auto& b = j.at("backbone");
    s.backbone.family = parse_backbone_family(b.at("family").get<std::string>());
    s.backbone.pretrained = b.at("pretrained").get<bool>();
    s.backbone.feature_dim = b.at("feature_dim").get<int>();
    s.backbone.tiny_width = b.at("tiny_width").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    s.per_modality_feature_dim = j.at("per_modality_feature_dim").get<int>();
    s.gate_hidden_dim = j.at("gate_hidden_dim").get<int>();
    s.detach_gate_input = j.at("detach_gate_input").get<bool>();
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// First-layer channel adaptation

/// Rescale applied when a 3-channel kernel is widened or narrowed to
/// `target_channels` inputs.
struct FirstLayerAdaptation {
    static constexpr int source_channels = 3;
    int target_channels = 3;

    double rescale_factor() const noexcept {
        return static_cast<double>(source_channels) / target_channels;
    }
};

/// Map a (filters, 3, k, k) kernel to (filters, C, k, k). With C >= 3 the RGB
/// channels are kept and every extra channel takes the per-tap RGB mean; with
/// C < 3 every channel takes the mean. All weights are then scaled by 3/C,
/// which keeps each filter's total weight (and hence its response to a
/// channel-constant input) unchanged.
template <typename T>
Tensor<T> adapt_first_layer(const Tensor<T>& weights, int target_channels) {
    if (weights.rank() != 4 || weights.dim(1) != FirstLayerAdaptation::source_channels) {
        throw std::invalid_argument("adapt_first_layer expects (filters, 3, k, k) weights, got " +
                                    shape_string(weights.shape()));
    }
    if (target_channels < 1) throw std::invalid_argument("target_channels must be >= 1");
    const int filters = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    const int taps = kh * kw;
    const double scale = FirstLayerAdaptation{target_channels}.rescale_factor();
    Tensor<T> out({filters, target_channels, kh, kw});
    for (int f = 0; f < filters; ++f) {
        const T* src = weights.data() + static_cast<std::size_t>(f) * 3 * taps;
        T* dst = out.data() + static_cast<std::size_t>(f) * target_channels * taps;
        for (int t = 0; t < taps; ++t) {
            const double r = src[t], g = src[taps + t], b = src[2 * taps + t];
            const double mean = (r + g + b) / 3.0;
            for (int c = 0; c < target_channels; ++c) {
                const double v = (target_channels >= 3 && c < 3) ? static_cast<double>(src[c * taps + t]) : mean;
                dst[c * taps + t] = static_cast<T>(v * scale);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

/// One batch of co-registered tiles. Early fusion reads `stacked`
/// (N, 5, S, S); late fusion and MoE read the per-modality tensors.
template <typename T>
struct FusionInput {
    Tensor<T> stacked;
    Tensor<T> thermal;
    Tensor<T> rgb;
    Tensor<T> lidar;

    const Tensor<T>& modality(Modality m) const {
        switch (m) {
            case Modality::thermal: return thermal;
            case Modality::rgb: return rgb;
            case Modality::lidar: return lidar;
        }
        throw std::logic_error("bad modality");
    }
};

template <typename T>
struct ModelOutput {
    /// Early/late: raw class scores. MoE: the gated mixture distribution.
    Tensor<T> class_scores;
    /// MoE only: per-expert class distributions in modality order.
    std::array<Tensor<T>, 3> expert_probs;
    /// MoE only: (N, 3) gating weights in modality order.
    Tensor<T> gates;
};

/// Pretrained trunk tensors keyed by torchvision names (no "fc.*").
using PretrainedWeights = std::map<std::string, Tensor<float>>;

inline PretrainedWeights load_pretrained(const std::filesystem::path& path) {
    return io::read_archive(path, io::kTensorsMagic).tensors;
}

template <typename T>
class FusionModel {
public:
    static constexpr int kEarlyChannels = 5;

    FusionModel(const FusionModelSpec& spec, std::uint64_t seed,
                const PretrainedWeights* pretrained = nullptr)
        : spec_(spec) {
        spec_.validate();
        if (spec_.backbone.pretrained && pretrained == nullptr)
            throw std::invalid_argument("spec requests pretrained weights but none were supplied");
        std::mt19937_64 rng(seed);
        if (spec_.strategy == Strategy::early) {
            trunks_.push_back(make_trunk(rng, pretrained, kEarlyChannels));
            fc_.push_back(std::make_unique<nn::Linear<T>>(trunks_[0]->out_features(), spec_.num_classes));
            fc_[0]->init_uniform_fan_in(rng);
            return;
        }
        const int d = spec_.per_modality_feature_dim;
        for (Modality m : kModalities) {
            trunks_.push_back(make_trunk(rng, pretrained, band_count(m)));
            fc_.push_back(std::make_unique<nn::Linear<T>>(trunks_.back()->out_features(), d));
            fc_.back()->init_uniform_fan_in(rng);
        }
        if (spec_.strategy == Strategy::late) {
            classifier_ = std::make_unique<nn::Linear<T>>(3 * d, spec_.num_classes);
            classifier_->init_uniform_fan_in(rng);
            return;
        }
        for (int m = 0; m < 3; ++m) {
            heads_.push_back(std::make_unique<nn::Linear<T>>(d, spec_.num_classes));
            heads_.back()->init_uniform_fan_in(rng);
        }
        gate_hidden_ = std::make_unique<nn::Linear<T>>(3 * d, spec_.gate_hidden_dim);
        gate_out_ = std::make_unique<nn::Linear<T>>(spec_.gate_hidden_dim, 3);
        gate_hidden_->init_uniform_fan_in(rng);
        gate_out_->init_uniform_fan_in(rng);
    }

    const FusionModelSpec& spec() const noexcept { return spec_; }
    Strategy strategy() const noexcept { return spec_.strategy; }

    nn::Trunk<T>& trunk(int i) { return *trunks_.at(static_cast<std::size_t>(i)); }

    ModelOutput<T> forward(const FusionInput<T>& in, nn::Mode mode) {
        validate_input(in);
        ModelOutput<T> out;
        if (spec_.strategy == Strategy::early) {
            out.class_scores = fc_[0]->forward(trunks_[0]->forward(in.stacked, mode), mode);
            return out;
        }
        std::array<Tensor<T>, 3> feats;
        for (int m = 0; m < 3; ++m) {
            feats[m] = fc_[m]->forward(trunks_[m]->forward(in.modality(kModalities[m]), mode), mode);
        }
        const std::array<const Tensor<T>*, 3> parts{&feats[0], &feats[1], &feats[2]};
        Tensor<T> joint = concat_features<T>(parts);
        if (spec_.strategy == Strategy::late) {
            out.class_scores = classifier_->forward(joint, mode);
            return out;
        }
        out.gates = nn::softmax_rows(gate_out_->forward(gate_relu_.forward(gate_hidden_->forward(joint, mode), mode), mode));
        for (int m = 0; m < 3; ++m) out.expert_probs[m] = nn::softmax_rows(heads_[m]->forward(feats[m], mode));
        const int n = out.gates.dim(0), k = spec_.num_classes;
        out.class_scores = Tensor<T>({n, k});
        for (int i = 0; i < n; ++i)
            for (int m = 0; m < 3; ++m)
                for (int c = 0; c < k; ++c)
                    out.class_scores.at(i, c) += out.gates.at(i, m) * out.expert_probs[m].at(i, c);
        if (mode == nn::Mode::train) last_ = out;
        return out;
    }

    /// Backpropagate d(loss)/d(class_scores) from the last training-mode
    /// forward, accumulating parameter gradients.
    void backward(const Tensor<T>& grad_scores) {
        if (spec_.strategy == Strategy::early) {
            trunks_[0]->backward(fc_[0]->backward(grad_scores));
            return;
        }
        const int d = spec_.per_modality_feature_dim;
        const std::array<int, 3> widths{d, d, d};
        std::vector<Tensor<T>> dfeat;
        if (spec_.strategy == Strategy::late) {
            dfeat = split_features<T>(classifier_->backward(grad_scores), widths);
        } else {
            const int n = grad_scores.dim(0), k = spec_.num_classes;
            Tensor<T> dgates({n, 3});
            dfeat.resize(3);
            for (int m = 0; m < 3; ++m) {
                Tensor<T> dp({n, k});
                for (int i = 0; i < n; ++i) {
                    T dot = 0;
                    for (int c = 0; c < k; ++c) {
                        dp.at(i, c) = last_.gates.at(i, m) * grad_scores.at(i, c);
                        dot += grad_scores.at(i, c) * last_.expert_probs[m].at(i, c);
                    }
                    dgates.at(i, m) = dot;
                }
                dfeat[m] = heads_[m]->backward(nn::softmax_rows_backward(last_.expert_probs[m], dp));
            }
            Tensor<T> djoint = gate_hidden_->backward(
                gate_relu_.backward(gate_out_->backward(nn::softmax_rows_backward(last_.gates, dgates))));
            if (!spec_.detach_gate_input) {
                auto parts = split_features<T>(djoint, widths);
                for (int m = 0; m < 3; ++m) dfeat[m] += parts[m];
            }
            last_ = ModelOutput<T>();
        }
        for (int m = 0; m < 3; ++m) trunks_[m]->backward(fc_[m]->backward(dfeat[m]));
    }

    nn::NamedTensors<T> parameters() {
        nn::NamedTensors<T> out;
        visit([&](const std::string& name, nn::Module<T>& mod) { mod.parameters(name, out); });
        return out;
    }

    nn::NamedTensors<T> buffers() {
        nn::NamedTensors<T> out;
        visit([&](const std::string& name, nn::Module<T>& mod) { mod.buffers(name, out); });
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (const auto& p : parameters()) n += p.value->size();
        return n;
    }

    /// Parameters and buffers as float tensors for checkpointing.
    std::map<std::string, Tensor<float>> state_dict() {
        std::map<std::string, Tensor<float>> out;
        for (const auto& p : parameters()) out.emplace(p.name, p.value->template cast<float>());
        for (const auto& b : buffers()) out.emplace(b.name, b.value->template cast<float>());
        return out;
    }

    void load_state_dict(const std::map<std::string, Tensor<float>>& state) {
        auto all = parameters();
        auto bufs = buffers();
        all.insert(all.end(), bufs.begin(), bufs.end());
        for (auto& entry : all) {
            auto it = state.find(entry.name);
            if (it == state.end()) throw std::runtime_error("state is missing tensor '" + entry.name + "'");
            if (it->second.shape() != entry.value->shape()) {
                throw std::runtime_error("tensor '" + entry.name + "' has shape " + shape_string(it->second.shape()) +
                                         ", model expects " + shape_string(entry.value->shape()));
            }
            *entry.value = it->second.template cast<T>();
        }
    }

private:
    template <typename Rng>
    std::unique_ptr<nn::Trunk<T>> make_trunk(Rng& rng, const PretrainedWeights* pretrained, int channels) {
        std::unique_ptr<nn::Trunk<T>> trunk;
        if (spec_.backbone.family == BackboneFamily::paper_resnet50) {
            trunk = std::make_unique<nn::ResNet50Trunk<T>>(rng);
        } else {
            trunk = std::make_unique<nn::TinyCnnTrunk<T>>(spec_.backbone.feature_dim, spec_.backbone.tiny_width, rng);
        }
        if (spec_.backbone.pretrained) load_trunk(*trunk, *pretrained);
        auto& conv = trunk->first_conv();
        conv.set_weight(adapt_first_layer(conv.weight().value, channels));
        return trunk;
    }

    static void load_trunk(nn::Trunk<T>& trunk, const PretrainedWeights& weights) {
        nn::NamedTensors<T> all;
        trunk.parameters("", all);
        trunk.buffers("", all);
        for (auto& entry : all) {
            auto it = weights.find(entry.name);
            if (it == weights.end())
                throw std::runtime_error("pretrained weights lack '" + entry.name + "'");
            if (it->second.shape() != entry.value->shape())
                throw std::runtime_error("pretrained '" + entry.name + "' has shape " + shape_string(it->second.shape()));
            *entry.value = it->second.template cast<T>();
        }
    }

    template <typename F>
    void visit(F&& f) {
        static const std::array<std::string, 3> names{"thermal", "rgb", "lidar"};
        if (spec_.strategy == Strategy::early) {
            f("backbone", *trunks_[0]);
            f("fc", *fc_[0]);
            return;
        }
        for (int m = 0; m < 3; ++m) {
            f(names[m] + ".backbone", *trunks_[m]);
            f(names[m] + ".fc", *fc_[m]);
        }
        if (classifier_) f("classifier", *classifier_);
        for (int m = 0; m < static_cast<int>(heads_.size()); ++m) f(names[m] + ".head", *heads_[m]);
        if (gate_hidden_) {
            f("gate.0", *gate_hidden_);
            f("gate.2", *gate_out_);
        }
    }

    void validate_input(const FusionInput<T>& in) const {
        auto check = [](const std::string& what, const Tensor<T>& t, int channels, int batch) {
            if (t.rank() != 4 || t.dim(1) != channels || (batch >= 0 && t.dim(0) != batch)) {
                const std::string n = batch >= 0 ? std::to_string(batch) : "N";
                throw std::invalid_argument(what + ": expected shape (" + n + "," + std::to_string(channels) +
                                            ",H,W), got " + shape_string(t.shape()));
            }
        };
        if (spec_.strategy == Strategy::early) {
            check("stacked", in.stacked, kEarlyChannels, -1);
            return;
        }
        check("thermal", in.thermal, 1, -1);
        check("rgb", in.rgb, 3, in.thermal.dim(0));
        check("lidar", in.lidar, 1, in.thermal.dim(0));
    }

    FusionModelSpec spec_;
    std::vector<std::unique_ptr<nn::Trunk<T>>> trunks_;
    std::vector<std::unique_ptr<nn::Linear<T>>> fc_;
    std::unique_ptr<nn::Linear<T>> classifier_;
    std::vector<std::unique_ptr<nn::Linear<T>>> heads_;
    std::unique_ptr<nn::Linear<T>> gate_hidden_;
    nn::ReLU<T> gate_relu_;
    std::unique_ptr<nn::Linear<T>> gate_out_;
    ModelOutput<T> last_;
};

template <typename T>
FusionModel<T> build_early(FusionModelSpec spec, std::uint64_t seed, const PretrainedWeights* w = nullptr) {
    if (spec.strategy != Strategy::early) throw std::invalid_argument("build_early needs strategy=early");
    return FusionModel<T>(spec, seed, w);
}

template <typename T>
FusionModel<T> build_late(FusionModelSpec spec, std::uint64_t seed, const PretrainedWeights* w = nullptr) {
    if (spec.strategy != Strategy::late) throw std::invalid_argument("build_late needs strategy=late");
    return FusionModel<T>(spec, seed, w);
}

template <typename T>
FusionModel<T> build_moe(FusionModelSpec spec, std::uint64_t seed, const PretrainedWeights* w = nullptr) {
    if (spec.strategy != Strategy::moe) throw std::invalid_argument("build_moe needs strategy=moe");
    return FusionModel<T>(spec, seed, w);
}

/// Per-row class probabilities: softmax of raw scores for early/late, the
/// mixture itself for MoE.
template <typename T>
Tensor<T> class_probabilities(Strategy s, const ModelOutput<T>& out) {
    return s == Strategy::moe ? out.class_scores : nn::softmax_rows(out.class_scores);
}

}  // namespace fusionbench
