// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded multi-trial training with validation-AUC early stopping.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unistd.h>
#include <vector>

#include "json.hpp"

#include "fusionbench/dataset.hpp"
#include "fusionbench/ingest.hpp"
#include "fusionbench/io/tensor_archive.hpp"
#include "fusionbench/log.hpp"
#include "fusionbench/metrics.hpp"
#include "fusionbench/models.hpp"
#include "fusionbench/nn/adam.hpp"

namespace fusionbench {

struct TrainConfig {
    int batch_size = 64;
    std::map<Strategy, double> learning_rate{{Strategy::early, 1e-3}, {Strategy::late, 1e-3}, {Strategy::moe, 1e-4}};
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int patience_epochs = 10;
    int max_epochs = 200;
    int n_trials = 50;

    double lr_for(Strategy s) const { return learning_rate.at(s); }

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (patience_epochs < 1) throw std::invalid_argument("patience_epochs must be >= 1");
        if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
        if (n_trials < 1) throw std::invalid_argument("n_trials must be >= 1");
        for (Strategy s : kStrategies) {
            auto it = learning_rate.find(s);
            if (it == learning_rate.end() || !(it->second > 0.0))
                throw std::invalid_argument("learning_rate for " + to_string(s) + " must be > 0");
        }
    }
};

/// Trial i is seeded with i.
inline std::uint64_t trial_seed(int trial_index) { return static_cast<std::uint64_t>(trial_index); }

/// Independent RNG stream for one purpose within a trial.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
    return std::mt19937_64(seq);
}

enum : std::uint32_t { kStreamShuffle = 1, kStreamRebalance = 2 };

// ---------------------------------------------------------------------------

/// Stops once the validation AUC has been strictly below the best seen for
/// more than `patience` epochs. Only a strictly higher AUC becomes the new
/// best and clears the count; an epoch that ties the best leaves both
/// untouched.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {
        if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    }

    /// Record one epoch's AUC; returns true when training should stop.
    bool update(double auc) {
        ++epoch_;
        improved_ = false;
        if (epoch_ == 1 || auc > best_) {
            best_ = auc;
            best_epoch_ = epoch_;
            below_ = 0;
            improved_ = true;
        } else if (auc < best_) {
            ++below_;
        }
        return below_ > patience_;
    }

    bool improved() const noexcept { return improved_; }
    double best() const noexcept { return best_; }
    int best_epoch() const noexcept { return best_epoch_; }
    int epochs() const noexcept { return epoch_; }
    int epochs_below_best() const noexcept { return below_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    int below_ = 0;
    double best_ = -std::numeric_limits<double>::infinity();
    bool improved_ = false;
};

// ---------------------------------------------------------------------------

template <typename T>
struct LossResult {
    T value = 0;
    /// d(loss)/d(class_scores), already divided by the batch size.
    Tensor<T> grad;
    std::size_t clamped = 0;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean cross-entropy over raw scores.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& scores, std::span<const int> labels) {
    const int n = scores.dim(0), k = scores.dim(1);
    LossResult<T> out;
    out.grad = nn::softmax_rows(scores);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= k) throw std::invalid_argument("label out of range");
        T mx = scores.at(i, 0);
        for (int c = 1; c < k; ++c) mx = std::max(mx, scores.at(i, c));
        double lse = 0.0;
        for (int c = 0; c < k; ++c) lse += std::exp(static_cast<double>(scores.at(i, c) - mx));
        total += std::log(lse) + mx - scores.at(i, y);
        out.grad.at(i, y) -= T(1);
    }
    for (auto& g : out.grad.values()) g /= static_cast<T>(n);
    out.value = static_cast<T>(total / n);
    return out;
}

/// Mean negative log-likelihood of a probability mixture; probabilities at or
/// below 1e-12 are clamped and counted.
template <typename T>
LossResult<T> mixture_nll(const Tensor<T>& mixture, std::span<const int> labels) {
    const int n = mixture.dim(0), k = mixture.dim(1);
    LossResult<T> out;
    out.grad = Tensor<T>(mixture.shape());
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= k) throw std::invalid_argument("label out of range");
        double p = mixture.at(i, y);
        if (p <= kProbabilityFloor) {
            p = kProbabilityFloor;
            ++out.clamped;
        }
        total -= std::log(p);
        out.grad.at(i, y) = static_cast<T>(-1.0 / (p * n));
    }
    out.value = static_cast<T>(total / n);
    return out;
}

template <typename T>
LossResult<T> loss(Strategy s, const ModelOutput<T>& out, std::span<const int> labels) {
    return s == Strategy::moe ? mixture_nll(out.class_scores, labels) : cross_entropy(out.class_scores, labels);
}

// ---------------------------------------------------------------------------

/// Normalized samples plus, for early fusion, the upsampled 5-band stacks.
struct ModelDataset {
    std::vector<TileSample> samples;
    std::vector<Tensor<float>> stacked;

    std::size_t size() const noexcept { return samples.size(); }
    std::vector<int> labels() const {
        std::vector<int> out;
        for (const auto& s : samples) out.push_back(index_of(s.label));
        return out;
    }
};

/// Upsample thermal and lidar to the RGB tile side and stack
/// [thermal, r, g, b, lidar].
inline Tensor<float> stack_early(const TileSample& s) {
    const int side = s.rgb.dim(1);
    auto up = [&](const Tensor<float>& t, const char* name) {
        if (side % t.dim(1) != 0)
            throw std::invalid_argument(std::string(name) + " tile side " + std::to_string(t.dim(1)) +
                                        " does not divide the RGB side " + std::to_string(side));
        return resample_bicubic(t, side / t.dim(1));
    };
    const Tensor<float> th = up(s.thermal, "thermal"), li = up(s.lidar, "lidar");
    const std::size_t plane = static_cast<std::size_t>(side) * side;
    Tensor<float> out({5, side, side});
    std::copy_n(th.data(), plane, out.data());
    std::copy_n(s.rgb.data(), 3 * plane, out.data() + plane);
    std::copy_n(li.data(), plane, out.data() + 4 * plane);
    return out;
}

inline ModelDataset make_model_dataset(std::vector<TileSample> normalized, Strategy s) {
    ModelDataset d;
    d.samples = std::move(normalized);
    if (s == Strategy::early) {
        d.stacked.reserve(d.samples.size());
        for (const auto& sample : d.samples) d.stacked.push_back(stack_early(sample));
    }
    return d;
}

template <typename T>
FusionInput<T> make_batch(Strategy s, const ModelDataset& data, std::span<const std::size_t> idx) {
    FusionInput<T> in;
    auto gather = [&](auto&& get) {
        std::vector<const Tensor<float>*> items;
        for (std::size_t i : idx) items.push_back(&get(i));
        return stack<float>(items).template cast<T>();
    };
    if (s == Strategy::early) {
        in.stacked = gather([&](std::size_t i) -> const Tensor<float>& { return data.stacked.at(i); });
    } else {
        in.thermal = gather([&](std::size_t i) -> const Tensor<float>& { return data.samples[i].thermal; });
        in.rgb = gather([&](std::size_t i) -> const Tensor<float>& { return data.samples[i].rgb; });
        in.lidar = gather([&](std::size_t i) -> const Tensor<float>& { return data.samples[i].lidar; });
    }
    return in;
}

struct Predictions {
    Tensor<double> probabilities;  // (n, K)
    Tensor<double> gates;          // (n, 3), MoE only
};

template <typename T>
Predictions predict(FusionModel<T>& model, const ModelDataset& data, int batch_size) {
    const int n = static_cast<int>(data.size()), k = model.spec().num_classes;
    Predictions p;
    p.probabilities = Tensor<double>({n, k});
    if (model.strategy() == Strategy::moe) p.gates = Tensor<double>({n, 3});
    std::vector<std::size_t> idx;
    for (int start = 0; start < n; start += batch_size) {
        idx.clear();
        for (int i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(static_cast<std::size_t>(i));
        const auto out = model.forward(make_batch<T>(model.strategy(), data, idx), nn::Mode::eval);
        const auto probs = class_probabilities(model.strategy(), out);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (int c = 0; c < k; ++c) p.probabilities.at(start + static_cast<int>(r), c) = probs.at(static_cast<int>(r), c);
            if (model.strategy() == Strategy::moe)
                for (int m = 0; m < 3; ++m) p.gates.at(start + static_cast<int>(r), m) = out.gates.at(static_cast<int>(r), m);
        }
    }
    return p;
}

template <typename T>
double validation_auc(FusionModel<T>& model, const ModelDataset& val, int batch_size) {
    const auto labels = val.labels();
    return auc_macro(predict(model, val, batch_size).probabilities, labels);
}

// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_auc = 0.0;
};

struct TrialResult {
    int trial_index = 0;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_auc = 0.0;
    bool stopped_early = false;
    std::size_t clamped_probabilities = 0;
    std::filesystem::path checkpoint;
};

template <typename T>
struct TrialOutcome {
    TrialResult result;
    std::map<std::string, Tensor<float>> best_state;
};

/// Train one freshly built model on a rebalanced, normalized training set.
/// On return the model holds the best-validation-AUC weights.
template <typename T>
TrialOutcome<T> train_trial(FusionModel<T>& model, const ModelDataset& train, const ModelDataset& val,
                            const TrainConfig& config, int trial_index,
                            const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    config.validate();
    if (train.size() == 0) throw std::invalid_argument("empty training set");
    const Strategy strategy = model.strategy();
    {
        const auto counts = class_counts(val.samples);
        for (int c = 0; c < kNumClasses; ++c)
            if (counts[c] == 0) log::warn("validation split has no '" + to_string(static_cast<ClassLabel>(c)) + "' samples");
    }
    TrialOutcome<T> outcome;
    TrialResult& r = outcome.result;
    r.trial_index = trial_index;
    r.seed = trial_seed(trial_index);

    nn::AdamOptions opt{config.lr_for(strategy), config.adam_beta1, config.adam_beta2, config.adam_eps};
    nn::Adam<T> adam(model.parameters(), opt);
    auto shuffle_rng = stream_rng(r.seed, kStreamShuffle);
    const auto train_labels = train.labels();
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    EarlyStopping stopper(config.patience_epochs);
    std::vector<int> batch_labels;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            batch_labels.clear();
            for (std::size_t i : idx) batch_labels.push_back(train_labels[i]);
            adam.zero_grad();
            const auto out = model.forward(make_batch<T>(strategy, train, idx), nn::Mode::train);
            auto l = loss(strategy, out, batch_labels);
            r.clamped_probabilities += l.clamped;
            model.backward(l.grad);
            adam.step();
            loss_sum += static_cast<double>(l.value) * static_cast<double>(idx.size());
        }
        EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()),
                        validation_auc(model, val, config.batch_size)};
        r.history.push_back(rec);
        const bool stop = stopper.update(rec.val_auc);
        if (stopper.improved()) outcome.best_state = model.state_dict();
        if (on_epoch) on_epoch(rec);
        if (stop) {
            r.stopped_early = true;
            break;
        }
    }
    r.best_epoch = stopper.best_epoch();
    r.best_val_auc = stopper.best();
    if (r.clamped_probabilities > 0)
        log::warn("trial " + std::to_string(trial_index) + ": " + std::to_string(r.clamped_probabilities) +
                  " mixture probabilities clamped at 1e-12");
    model.load_state_dict(outcome.best_state);
    return outcome;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
    FusionModelSpec spec;
    BandStats stats;
    nlohmann::json meta;
    std::map<std::string, Tensor<float>> state;
};

inline void save_checkpoint(const std::filesystem::path& path, const FusionModelSpec& spec, const BandStats& stats,
                            std::map<std::string, Tensor<float>> state, nlohmann::json extra = nlohmann::json::object()) {
    io::TensorArchive a;
    a.meta = {{"model_spec", to_json(spec)}, {"band_stats", to_json(stats)}, {"extra", std::move(extra)}};
    a.tensors = std::move(state);
    io::write_archive(path, io::kCheckpointMagic, a);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto a = io::read_archive(path, io::kCheckpointMagic);
    Checkpoint c;
    c.spec = model_spec_from_json(a.meta.at("model_spec"));
    c.stats = band_stats_from_json(a.meta.at("band_stats"));
    c.meta = a.meta.value("extra", nlohmann::json::object());
    c.state = std::move(a.tensors);
    return c;
}

template <typename T = float>
FusionModel<T> model_from_checkpoint(const Checkpoint& c) {
    FusionModelSpec spec = c.spec;
    spec.backbone.pretrained = false;  // weights come from the checkpoint
    FusionModel<T> model(spec, 0);
    model.load_state_dict(c.state);
    return model;
}

// ---------------------------------------------------------------------------
// Multi-trial experiment with resumable per-trial directories:
//   <root>/<strategy>/trial_<i>/{checkpoint.fbck, history.jsonl, result.json, DONE}

inline nlohmann::json to_json(const TrialResult& r) {
    return {{"trial_index", r.trial_index},  {"seed", r.seed},
            {"best_epoch", r.best_epoch},    {"best_val_auc", r.best_val_auc},
            {"epochs_run", r.history.size()}, {"stopped_early", r.stopped_early},
            {"clamped_probabilities", r.clamped_probabilities}};
}

inline std::filesystem::path trial_dir(const std::filesystem::path& root, Strategy s, int i) {
    return root / to_string(s) / ("trial_" + std::to_string(i));
}

inline bool trial_complete(const std::filesystem::path& dir) { return std::filesystem::exists(dir / "DONE"); }

inline TrialResult load_trial_result(const std::filesystem::path& dir) {
    std::ifstream in(dir / "result.json");
    if (!in) throw std::runtime_error("missing result.json in " + dir.string());
    const auto j = nlohmann::json::parse(in);
    TrialResult r;
    r.trial_index = j.at("trial_index").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val_auc = j.at("best_val_auc").get<double>();
    r.stopped_early = j.at("stopped_early").get<bool>();
    r.clamped_probabilities = j.at("clamped_probabilities").get<std::size_t>();
    r.checkpoint = dir / "checkpoint.fbck";
    std::ifstream hist(dir / "history.jsonl");
    std::string line;
    while (std::getline(hist, line)) {
        if (line.empty()) continue;
        const auto h = nlohmann::json::parse(line);
        r.history.push_back({h.at("epoch").get<int>(), h.at("train_loss").get<double>(), h.at("val_auc").get<double>()});
    }
    return r;
}

/// Completed trials under `root` for one strategy, by index.
inline std::vector<TrialResult> completed_trials(const std::filesystem::path& root, Strategy s) {
    std::vector<TrialResult> out;
    const auto dir = root / to_string(s);
    if (!std::filesystem::exists(dir)) return out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (!entry.is_directory() || name.rfind("trial_", 0) != 0 || name.find('.') != std::string::npos) continue;
        if (trial_complete(entry.path())) out.push_back(load_trial_result(entry.path()));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.trial_index < b.trial_index; });
    return out;
}

struct ExperimentData {
    std::vector<TileSample> train;  // normalized, unique (pre-rebalancing)
    std::vector<TileSample> val;    // normalized
    BandStats stats;
};

struct TrialRange {
    int begin = 0;
    int end = 0;  // exclusive
};

template <typename T = float>
std::vector<TrialResult> run_experiment(const FusionModelSpec& spec, const ExperimentData& data,
                                        const TrainConfig& config, const RebalancePlan& plan,
                                        const std::filesystem::path& root, TrialRange range,
                                        const PretrainedWeights* pretrained = nullptr) {
    config.validate();
    const Strategy strategy = spec.strategy;
    try {
        std::filesystem::create_directories(root / to_string(strategy));
        const auto probe = root / to_string(strategy) / (".probe." + std::to_string(::getpid()));
        std::ofstream(probe) << "ok";
        if (!std::filesystem::exists(probe)) throw std::runtime_error("probe file not created");
        std::filesystem::remove(probe);
    } catch (const std::exception& e) {
        throw std::runtime_error("trial directory " + (root / to_string(strategy)).string() + " is not writable: " + e.what());
    }
    const ModelDataset val = make_model_dataset(data.val, strategy);
    const auto train_labels = labels_of(data.train);

    std::vector<TrialResult> results;
    for (int i = range.begin; i < range.end; ++i) {
        const auto dir = trial_dir(root, strategy, i);
        if (trial_complete(dir)) {
            log::info(to_string(strategy) + " trial " + std::to_string(i) + " already complete; skipping");
            results.push_back(load_trial_result(dir));
            continue;
        }
        if (std::filesystem::exists(dir)) std::filesystem::remove_all(dir);
        const auto tmp = dir.parent_path() / (dir.filename().string() + ".partial." + std::to_string(::getpid()));
        std::filesystem::remove_all(tmp);
        std::filesystem::create_directories(tmp);

        const auto t0 = std::chrono::steady_clock::now();
        const auto picks = rebalance_indices(train_labels, plan, stream_rng(trial_seed(i), kStreamRebalance)());
        std::vector<TileSample> balanced;
        balanced.reserve(picks.size());
        for (std::size_t p : picks) balanced.push_back(data.train[p]);
        const ModelDataset train = make_model_dataset(std::move(balanced), strategy);

        FusionModel<T> model(spec, trial_seed(i), pretrained);
        std::ofstream hist(tmp / "history.jsonl");
        auto outcome = train_trial(model, train, val, config, i, [&](const EpochRecord& e) {
            hist << nlohmann::json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_auc", e.val_auc}}.dump() << '\n';
            hist.flush();
        });
        hist.close();
        save_checkpoint(tmp / "checkpoint.fbck", spec, data.stats, std::move(outcome.best_state),
                        {{"trial_index", i}, {"best_epoch", outcome.result.best_epoch},
                         {"best_val_auc", outcome.result.best_val_auc}});
        std::ofstream(tmp / "result.json") << to_json(outcome.result).dump(2) << '\n';
        std::ofstream(tmp / "DONE") << "ok\n";
        std::filesystem::rename(tmp, dir);

        outcome.result.checkpoint = dir / "checkpoint.fbck";
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream msg;
        msg << to_string(strategy) << " trial " << i << ": best val AUC " << outcome.result.best_val_auc << " at epoch "
            << outcome.result.best_epoch << " of " << outcome.result.history.size() << " (" << secs << " s)";
        log::info(msg.str());
        results.push_back(std::move(outcome.result));
    }
    return results;
}

}  // namespace fusionbench
