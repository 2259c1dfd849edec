// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Subcommand implementations behind the fusionbench executable. Each takes a
// parsed RunConfig plus flag overrides; flags win over the config file.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionbench/config.hpp"
#include "fusionbench/dataset.hpp"
#include "fusionbench/evaluation.hpp"
#include "fusionbench/ingest.hpp"
#include "fusionbench/log.hpp"
#include "fusionbench/synthgen.hpp"
#include "fusionbench/training.hpp"

namespace fusionbench::cli {

/// "A:B" -> [A, B).
inline TrialRange parse_trial_range(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("trial range must look like A:B, got '" + text + "'");
    TrialRange r;
    try {
        std::size_t used = 0;
        const std::string a = text.substr(0, colon), b = text.substr(colon + 1);
        r.begin = std::stoi(a, &used);
        if (used != a.size()) throw std::invalid_argument(a);
        r.end = std::stoi(b, &used);
        if (used != b.size()) throw std::invalid_argument(b);
    } catch (const std::exception&) {
        throw std::invalid_argument("trial range must look like A:B, got '" + text + "'");
    }
    if (r.begin < 0 || r.end <= r.begin) throw std::invalid_argument("trial range " + text + " is empty or negative");
    return r;
}

inline void require_file(const std::filesystem::path& p, const std::string& what) {
    if (p.empty() || !std::filesystem::exists(p)) throw std::runtime_error(what + " not found: " + p.string());
}

// ---------------------------------------------------------------------------

struct SynthOptions {
    std::optional<std::uint64_t> seed;
    std::optional<double> level;
    std::optional<std::filesystem::path> out;
};

inline ScenePaths cmd_synth(const RunConfig& config, const SynthOptions& opt = {}) {
    SceneSpec spec = config.scene;
    if (opt.seed) spec.seed = *opt.seed;
    if (opt.level) spec = difficulty_dial(spec, *opt.level);
    const Scene scene = generate_scene(spec);
    ScenePaths paths = opt.out ? scene_paths(*opt.out)
                               : ScenePaths{config.paths.thermal, config.paths.rgb, config.paths.lidar, config.paths.points};
    for (const auto* p : {&paths.thermal, &paths.rgb, &paths.lidar, &paths.points})
        if (p->has_parent_path()) std::filesystem::create_directories(p->parent_path());
    save_mosaic(paths.thermal, scene.thermal);
    save_mosaic(paths.rgb, scene.rgb);
    save_mosaic(paths.lidar, scene.lidar);
    save_points(paths.points, scene.points);
    log::info("synth: " + std::to_string(scene.points.size()) + " feature points over " + std::to_string(spec.n_rows) + "x" +
              std::to_string(spec.n_cols) + " cells");
    return paths;
}

// ---------------------------------------------------------------------------

struct PrepareSummary {
    std::filesystem::path data_dir;
    std::array<std::array<std::size_t, kNumClasses>, 3> counts{};  // [split][class]
    std::size_t points_rejected = 0;
    std::size_t cells_rejected = 0;
    std::array<int, 3> tile_sides{};
};

inline nlohmann::json to_json(const PrepareSummary& s) {
    nlohmann::json j;
    const char* names[] = {"train", "val", "test"};
    for (int k = 0; k < 3; ++k)
        for (int c = 0; c < kNumClasses; ++c) j["counts"][names[k]][to_string(static_cast<ClassLabel>(c))] = s.counts[k][c];
    j["points_rejected_outside"] = s.points_rejected;
    j["cells_rejected"] = s.cells_rejected;
    j["tile_sides"] = {{"thermal", s.tile_sides[0]}, {"rgb", s.tile_sides[1]}, {"lidar", s.tile_sides[2]}};
    return j;
}

/// Ingest, label, split and persist raw tiles plus training band statistics
/// under <output>/data.
inline PrepareSummary cmd_prepare(const RunConfig& config) {
    require_file(config.paths.thermal, "thermal raster");
    require_file(config.paths.rgb, "rgb raster");
    require_file(config.paths.lidar, "lidar raster");
    require_file(config.paths.points, "points file");
    const RasterMosaic thermal = load_mosaic(config.paths.thermal, Modality::thermal);
    const RasterMosaic rgb = load_mosaic(config.paths.rgb, Modality::rgb);
    const RasterMosaic lidar = load_mosaic(config.paths.lidar, Modality::lidar);
    check_alignment({&thermal, &rgb, &lidar});

    const auto pts = load_points(config.paths.points, thermal);
    if (pts.rejected_outside) log::warn("prepare: " + std::to_string(pts.rejected_outside) + " point(s) outside the extent were rejected");
    const GridSpec grid = grid_for(thermal, config.cell_size_m);
    const auto labels = assign_labels(grid, pts.points);
    auto built = build_samples(thermal, rgb, lidar, grid, labels);
    SplitSets sets = split(std::move(built.samples), config.split);

    // Surface the rebalance precondition (every class present) before writing anything.
    rebalance_indices(labels_of(sets.train), config.rebalance, 0);
    const BandStats stats = fit_stats(sets.train);

    PrepareSummary summary;
    summary.data_dir = config.paths.data_dir();
    summary.points_rejected = pts.rejected_outside;
    summary.cells_rejected = built.rejected_cells;
    summary.counts = {class_counts(sets.train), class_counts(sets.val), class_counts(sets.test)};
    summary.tile_sides = {tile_side(grid.cell_size_m, thermal.resolution_m), tile_side(grid.cell_size_m, rgb.resolution_m),
                          tile_side(grid.cell_size_m, lidar.resolution_m)};

    const auto dest = summary.data_dir;
    const auto tmp = dest.parent_path() / (dest.filename().string() + ".partial");
    std::filesystem::remove_all(tmp);
    std::filesystem::create_directories(tmp);
    write_tile_archive(tmp / "train", SplitName::train, sets.train);
    write_tile_archive(tmp / "val", SplitName::val, sets.val);
    write_tile_archive(tmp / "test", SplitName::test, sets.test);
    write_split_manifest(tmp / "split_manifest.jsonl", sets);
    save_band_stats(tmp / "band_stats.json", stats);
    std::ofstream(tmp / "prepare.json") << to_json(summary).dump(2) << '\n';
    std::filesystem::remove_all(dest);
    std::filesystem::rename(tmp, dest);

    std::ostringstream msg;
    msg << "prepare: train/val/test = " << sets.train.size() << "/" << sets.val.size() << "/" << sets.test.size()
        << " cells; tiles " << summary.tile_sides[0] << "/" << summary.tile_sides[1] << "/" << summary.tile_sides[2] << " px";
    log::info(msg.str());
    return summary;
}

/// Normalized train (unique tiles) and validation sets from a prepared data dir.
inline ExperimentData load_experiment_data(const std::filesystem::path& data_dir) {
    require_file(data_dir / "band_stats.json", "band statistics (run prepare first)");
    ExperimentData d;
    d.stats = load_band_stats(data_dir / "band_stats.json");
    for (auto& s : read_tile_archive(data_dir / "train")) d.train.push_back(normalize(std::move(s), d.stats));
    for (auto& s : read_tile_archive(data_dir / "val")) d.val.push_back(normalize(std::move(s), d.stats));
    return d;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
    std::optional<Strategy> strategy;
    std::optional<int> trials;
    std::optional<TrialRange> range;
};

inline std::optional<PretrainedWeights> pretrained_for(const RunConfig& config) {
    if (!config.model.backbone.pretrained) return std::nullopt;
    require_file(config.paths.pretrained, "pretrained weights (paths.pretrained or " + std::string(kPretrainedEnv) + ")");
    return load_pretrained(config.paths.pretrained);
}

inline std::vector<TrialResult> cmd_train(const RunConfig& config, const TrainOptions& opt = {}) {
    FusionModelSpec spec = config.model;
    if (opt.strategy) spec.strategy = *opt.strategy;
    TrainConfig train = config.train;
    if (opt.trials) train.n_trials = *opt.trials;
    const TrialRange range = opt.range ? *opt.range : TrialRange{0, train.n_trials};
    const ExperimentData data = load_experiment_data(config.paths.data_dir());
    const auto weights = pretrained_for(config);
    return run_experiment<float>(spec, data, train, config.rebalance, config.paths.trials_dir(), range,
                                 weights ? &*weights : nullptr);
}

// ---------------------------------------------------------------------------

inline ReportFiles cmd_evaluate(const RunConfig& config, const std::optional<std::filesystem::path>& out = std::nullopt) {
    const auto test_dir = config.paths.data_dir() / "test";
    require_file(test_dir / "manifest.jsonl", "test split (run prepare first)");
    const auto test_raw = read_tile_archive(test_dir);
    std::map<Strategy, StrategyEvaluation> results;
    for (Strategy s : kStrategies) {
        const auto trials = completed_trials(config.paths.trials_dir(), s);
        if (trials.empty()) continue;
        log::info("evaluate: " + to_string(s) + " over " + std::to_string(trials.size()) + " trial(s)");
        results[s] = evaluate_trials(s, trials, test_raw, config.train.batch_size);
    }
    if (results.empty()) throw std::runtime_error("no completed trials under " + config.paths.trials_dir().string());
    return emit_report(results, out ? *out : config.paths.report_dir());
}

// ---------------------------------------------------------------------------

struct TuneRow {
    double learning_rate = 0.0;
    MeanSe best_val_auc;
};

inline std::vector<double> default_lr_grid() { return {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}; }

/// Train `trials` trials per learning rate and rank by mean best validation
/// AUC. Runs live under <output>/tune-lr/<strategy>/lr_<rate>/.
inline std::vector<TuneRow> cmd_tune_lr(const RunConfig& config, Strategy strategy, const std::vector<double>& rates,
                                        int trials) {
    if (rates.empty()) throw std::invalid_argument("tune-lr needs at least one learning rate");
    if (trials < 1) throw std::invalid_argument("tune-lr needs at least one trial per rate");
    const ExperimentData data = load_experiment_data(config.paths.data_dir());
    const auto weights = pretrained_for(config);
    FusionModelSpec spec = config.model;
    spec.strategy = strategy;
    std::vector<TuneRow> rows;
    nlohmann::json js = nlohmann::json::array();
    for (double lr : rates) {
        TrainConfig train = config.train;
        train.learning_rate[strategy] = lr;
        char tag[32];
        std::snprintf(tag, sizeof tag, "lr_%g", lr);
        const auto root = config.paths.output / "tune-lr" / to_string(strategy) / tag;
        const auto results = run_experiment<float>(spec, data, train, config.rebalance, root, {0, trials},
                                                   weights ? &*weights : nullptr);
        std::vector<double> aucs;
        for (const auto& r : results) aucs.push_back(r.best_val_auc);
        rows.push_back({lr, aggregate_lenient(aucs)});
        js.push_back({{"learning_rate", lr}, {"best_val_auc_mean", rows.back().best_val_auc.mean},
                      {"best_val_auc_two_se", rows.back().best_val_auc.two_se}, {"trials", trials}});
    }
    const auto out = config.paths.output / "tune-lr" / to_string(strategy) / "tune_lr.json";
    std::ofstream(out) << js.dump(2) << '\n';
    return rows;
}

}  // namespace fusionbench::cli
