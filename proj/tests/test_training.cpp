// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include <gtest/gtest.h>

#include "fusionbench/training.hpp"
#include "oracles.hpp"

using namespace fusionbench;
namespace fs = std::filesystem;

namespace {

FusionModelSpec tiny_spec(Strategy s) {
    FusionModelSpec spec;
    spec.strategy = s;
    spec.backbone.family = BackboneFamily::tiny_cnn;
    spec.backbone.feature_dim = 8;
    spec.backbone.tiny_width = 4;
    spec.per_modality_feature_dim = 8;
    spec.gate_hidden_dim = 8;
    return spec;
}

/// Small normalized samples whose class shifts one modality's mean.
std::vector<TileSample> toy_samples(int per_class, std::uint64_t seed, int col0 = 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, 1.0f);
    std::vector<TileSample> out;
    for (int c = 0; c < kNumClasses; ++c)
        for (int i = 0; i < per_class; ++i) {
            TileSample s;
            s.cell = {i, col0 + c};
            s.label = static_cast<ClassLabel>(c);
            s.thermal = Tensor<float>({1, 4, 4});
            s.rgb = Tensor<float>({3, 8, 8});
            s.lidar = Tensor<float>({1, 4, 4});
            for (Modality m : kModalities)
                for (auto& v : s.tile(m).values()) v = noise(rng);
            for (auto& v : s.thermal.values()) v += c == 1 ? 2.0f : 0.0f;
            for (auto& v : s.lidar.values()) v += c == 2 ? 2.0f : 0.0f;
            for (std::size_t k = 128; k < 192; ++k) s.rgb[k] += c == 3 ? 2.0f : 0.0f;
            out.push_back(std::move(s));
        }
    return out;
}

BandStats unit_stats() {
    BandStats b;
    b.mean.fill(0.0);
    b.std.fill(1.0);
    return b;
}

TrainConfig quick_config(int max_epochs = 6) {
    TrainConfig c;
    c.batch_size = 8;
    c.learning_rate = {{Strategy::early, 1e-2}, {Strategy::late, 1e-2}, {Strategy::moe, 1e-2}};
    c.patience_epochs = 2;
    c.max_epochs = max_epochs;
    c.n_trials = 2;
    return c;
}

fs::path scratch_root(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("fusionbench_training_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    return dir;
}

oracle::StopOutcome run_stopper(const std::vector<double>& aucs, int patience, int max_epochs) {
    EarlyStopping stopper(patience);
    const int n = std::min<int>(static_cast<int>(aucs.size()), max_epochs);
    for (int e = 0; e < n; ++e)
        if (stopper.update(aucs[e])) break;
    return {stopper.epochs(), stopper.best_epoch()};
}

}  // namespace

TEST(EarlyStopping, WorkedSequenceStopsAfterElevenEpochsBelowBest) {
    std::vector<double> aucs{0.6, 0.7};
    aucs.insert(aucs.end(), 11, 0.65);
    aucs.insert(aucs.end(), 5, 0.9);
    const auto got = run_stopper(aucs, 10, 200);
    EXPECT_EQ(got.stop_epoch, 13);
    EXPECT_EQ(got.best_epoch, 2);
}

TEST(EarlyStopping, IncreasingAndTiedSequencesRunToTheCap) {
    std::vector<double> up(30);
    for (int i = 0; i < 30; ++i) up[i] = 0.5 + 0.01 * i;
    EXPECT_EQ(run_stopper(up, 10, 25).stop_epoch, 25);
    EXPECT_EQ(run_stopper(up, 10, 25).best_epoch, 25);

    const std::vector<double> flat(40, 0.7);
    const auto tied = run_stopper(flat, 10, 40);
    EXPECT_EQ(tied.stop_epoch, 40);
    EXPECT_EQ(tied.best_epoch, 1);

    // A tie with the best neither resets nor extends the count.
    std::vector<double> mixed{0.8, 0.7, 0.8, 0.7};
    const auto m = run_stopper(mixed, 1, 10);
    EXPECT_EQ(m.stop_epoch, 4);
    EXPECT_EQ(m.best_epoch, 1);
    EXPECT_THROW(EarlyStopping(0), std::invalid_argument);
}

TEST(EarlyStopping, AgreesWithStepByStepSimulation) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> len(1, 80), level(0, 20);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> aucs(len(rng));
        for (auto& a : aucs) a = 0.5 + 0.02 * level(rng);  // coarse grid so ties occur
        const auto want = oracle::simulate_stopping(aucs, 10, 200);
        const auto got = run_stopper(aucs, 10, 200);
        ASSERT_EQ(got.stop_epoch, want.stop_epoch) << trial;
        ASSERT_EQ(got.best_epoch, want.best_epoch) << trial;
    }
}

TEST(Loss, CrossEntropyUniformScoresAndGradient) {
    Tensor<double> zeros({2, 4}, 0.0);
    const std::vector<int> labels{1, 3};
    const auto l = cross_entropy(zeros, std::span<const int>(labels));
    EXPECT_NEAR(l.value, std::log(4.0), 1e-12);
    EXPECT_NEAR(l.grad.at(0, 1), (0.25 - 1.0) / 2, 1e-12);
    EXPECT_NEAR(l.grad.at(0, 0), 0.25 / 2, 1e-12);

    std::mt19937_64 rng(3);
    Tensor<double> s({3, 4});
    oracle::fill_normal(s, rng, 2.0);
    const std::vector<int> y{0, 2, 3};
    const auto g = cross_entropy(s, std::span<const int>(y)).grad;
    const auto ng = oracle::numeric_gradient(s, [&] { return cross_entropy(s, std::span<const int>(y)).value; });
    EXPECT_LT(oracle::max_relative_error(g.storage(), ng), 1e-6);
    const std::vector<int> bad{4, 0, 0};
    EXPECT_THROW(cross_entropy(s, std::span<const int>(bad)), std::invalid_argument);
}

TEST(Loss, MixtureNllPerfectPredictionAndClamp) {
    Tensor<double> onehot({2, 4}, 0.0);
    onehot.at(0, 2) = 1.0;
    onehot.at(1, 0) = 1.0;
    const std::vector<int> labels{2, 0};
    const auto perfect = mixture_nll(onehot, std::span<const int>(labels));
    EXPECT_NEAR(perfect.value, 0.0, 1e-15);
    EXPECT_EQ(perfect.clamped, 0u);

    const std::vector<int> wrong{1, 0};
    const auto clamped = mixture_nll(onehot, std::span<const int>(wrong));
    EXPECT_EQ(clamped.clamped, 1u);
    EXPECT_NEAR(clamped.value, -std::log(1e-12) / 2, 1e-9);
    EXPECT_TRUE(std::isfinite(clamped.grad.at(0, 1)));

    Tensor<double> p({1, 4}, std::vector<double>{0.1, 0.2, 0.3, 0.4});
    const std::vector<int> y{3};
    EXPECT_NEAR(mixture_nll(p, std::span<const int>(y)).value, -std::log(0.4), 1e-12);
    EXPECT_NEAR(mixture_nll(p, std::span<const int>(y)).grad.at(0, 3), -1.0 / 0.4, 1e-12);
}

TEST(StackEarly, UpsamplesToRgbSideInBandOrder) {
    auto s = toy_samples(1, 5)[0];
    s.thermal.fill(1.0f);
    s.lidar.fill(-2.0f);
    const auto t = stack_early(s);
    EXPECT_EQ(t.shape(), (std::vector<int>{5, 8, 8}));
    EXPECT_NEAR(t[3 * 8 + 3], 1.0f, 1e-6);
    EXPECT_NEAR(t[(4 * 8 + 7) * 8], -2.0f, 1e-6);
    EXPECT_EQ(t[(2 * 8 + 5) * 8 + 6], s.rgb[(1 * 8 + 5) * 8 + 6]);
    s.lidar = Tensor<float>({1, 3, 3});
    EXPECT_THROW(stack_early(s), std::invalid_argument);
}

TEST(TrainTrial, KeepsBestWeightsAndReproducesBestValidationAuc) {
    for (Strategy s : kStrategies) {
        const auto train = make_model_dataset(toy_samples(8, 1), s);
        const auto val = make_model_dataset(toy_samples(5, 2), s);
        FusionModel<float> model(tiny_spec(s), trial_seed(0));
        auto outcome = train_trial(model, train, val, quick_config(), 0);
        const auto& r = outcome.result;
        ASSERT_FALSE(r.history.empty());
        EXPECT_LE(r.history.size(), 6u);
        double best = -1;
        int best_epoch = 0;
        for (const auto& e : r.history)
            if (e.val_auc > best) best = e.val_auc, best_epoch = e.epoch;
        EXPECT_EQ(r.best_epoch, best_epoch) << to_string(s);
        EXPECT_DOUBLE_EQ(r.best_val_auc, best);
        EXPECT_NEAR(validation_auc(model, val, 7), r.best_val_auc, 1e-6) << to_string(s);

        const auto ckpt = scratch_root("ckpt") / (to_string(s) + ".fbck");
        fs::create_directories(ckpt.parent_path());
        save_checkpoint(ckpt, model.spec(), unit_stats(), outcome.best_state, {{"trial_index", 0}});
        auto restored = model_from_checkpoint(load_checkpoint(ckpt));
        EXPECT_NEAR(validation_auc(restored, val, 64), r.best_val_auc, 1e-6) << to_string(s);
    }
}

TEST(TrainTrial, IdenticalSeedsGiveIdenticalHistories) {
    const auto train = make_model_dataset(toy_samples(6, 3), Strategy::moe);
    const auto val = make_model_dataset(toy_samples(4, 4), Strategy::moe);
    auto run = [&](int i) {
        FusionModel<float> m(tiny_spec(Strategy::moe), trial_seed(i));
        return train_trial(m, train, val, quick_config(4), i).result.history;
    };
    const auto a = run(0), b = run(0), c = run(1);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t e = 0; e < a.size(); ++e) {
        EXPECT_EQ(a[e].train_loss, b[e].train_loss);
        EXPECT_EQ(a[e].val_auc, b[e].val_auc);
    }
    EXPECT_NE(a[0].train_loss, c[0].train_loss);
}

TEST(RunExperiment, ResumesCompletedTrialsAndIsolatesSeeds) {
    ExperimentData data{toy_samples(5, 6), toy_samples(3, 7), unit_stats()};
    const auto spec = tiny_spec(Strategy::late);
    const RebalancePlan plan{6};
    const auto root = scratch_root("resume");
    const auto first = run_experiment(spec, data, quick_config(3), plan, root, {0, 2});
    ASSERT_EQ(first.size(), 2u);
    EXPECT_EQ(completed_trials(root, Strategy::late).size(), 2u);
    EXPECT_TRUE(fs::exists(root / "late" / "trial_1" / "checkpoint.fbck"));
    const auto stamp = fs::last_write_time(root / "late" / "trial_0" / "DONE");

    const auto second = run_experiment(spec, data, quick_config(3), plan, root, {0, 3});
    ASSERT_EQ(second.size(), 3u);
    EXPECT_EQ(fs::last_write_time(root / "late" / "trial_0" / "DONE"), stamp);
    EXPECT_EQ(second[0].best_val_auc, first[0].best_val_auc);
    ASSERT_EQ(second[1].history.size(), first[1].history.size());

    const auto alone_root = scratch_root("alone");
    const auto alone = run_experiment(spec, data, quick_config(3), plan, alone_root, {1, 2});
    ASSERT_EQ(alone.size(), 1u);
    ASSERT_EQ(alone[0].history.size(), first[1].history.size());
    for (std::size_t e = 0; e < alone[0].history.size(); ++e)
        EXPECT_NEAR(alone[0].history[e].val_auc, first[1].history[e].val_auc, 1e-12);

    const auto ckpt = load_checkpoint(root / "late" / "trial_1" / "checkpoint.fbck");
    EXPECT_EQ(ckpt.meta.at("trial_index").get<int>(), 1);
}

TEST(RunExperiment, UnwritableRootFailsBeforeTraining) {
    const auto blocker = scratch_root("blocker");
    fs::create_directories(blocker.parent_path());
    std::ofstream(blocker) << "not a directory";
    ExperimentData data{toy_samples(2, 8), toy_samples(2, 9), unit_stats()};
    try {
        run_experiment(tiny_spec(Strategy::early), data, quick_config(1), RebalancePlan{2}, blocker, {0, 1});
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("not writable"), std::string::npos) << e.what();
    }
}
