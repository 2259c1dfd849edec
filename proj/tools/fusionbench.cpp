// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// fusionbench: synth | prepare | train | evaluate | tune-lr

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fusionbench/cli.hpp"

namespace fb = fusionbench;

int main(int argc, char** argv) {
    CLI::App app{"Multimodal fusion benchmark: tiling, training and evaluation of early, late and mixture-of-experts fusion"};
    app.require_subcommand(1);

    std::string config_path;
    std::string log_level = "info";
    app.add_option("--config", config_path, "YAML run configuration")->required()->check(CLI::ExistingFile);
    app.add_option("--log-level", log_level, "debug, info, warn or error")
        ->check(CLI::IsMember({"debug", "info", "warn", "error"}));

    std::optional<std::uint64_t> seed;
    std::optional<double> level;
    std::optional<std::string> out;
    std::optional<std::string> strategy;
    std::optional<int> trials;
    std::optional<std::string> trial_range;
    std::vector<double> rates;
    int tune_trials = 1;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic scene (three rasters and a points CSV)");
    synth->add_option("--seed", seed, "Scene seed (overrides scene.seed)");
    synth->add_option("--level", level, "Difficulty in [0, 1]; 1 removes all signal")->check(CLI::Range(0.0, 1.0));
    synth->add_option("--out", out, "Directory for thermal.tif, rgb.tif, lidar.tif, points.csv");

    auto* prepare = app.add_subcommand("prepare", "Tile, label and split the rasters; fit band statistics");

    const auto strategies = CLI::IsMember({"early", "late", "moe"});
    auto* train = app.add_subcommand("train", "Run seeded training trials for one strategy");
    train->add_option("--strategy", strategy, "early, late or moe (overrides model.strategy)")->check(strategies);
    train->add_option("--trials", trials, "Number of trials (overrides train.n_trials)")->check(CLI::PositiveNumber);
    train->add_option("--trial-range", trial_range, "Half-open trial index range A:B");

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate completed trials on the test split and write the report");
    evaluate->add_option("--out", out, "Report directory (default <output>/report)");

    auto* tune = app.add_subcommand("tune-lr", "Sweep learning rates by best validation AUC");
    tune->add_option("--strategy", strategy, "early, late or moe")->check(strategies);
    tune->add_option("--rates", rates, "Learning rates to try (default 0.1 0.01 0.001 0.0001 0.00001)");
    tune->add_option("--trials", tune_trials, "Trials per learning rate")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (log_level == "debug") fb::log::set_level(fb::log::Level::debug);
        if (log_level == "warn") fb::log::set_level(fb::log::Level::warn);
        if (log_level == "error") fb::log::set_level(fb::log::Level::error);
        const fb::RunConfig config = fb::load_run_config(config_path);

        if (synth->parsed()) {
            fb::cli::SynthOptions opt{seed, level, std::nullopt};
            if (out) opt.out = *out;
            const auto paths = fb::cli::cmd_synth(config, opt);
            std::cout << paths.thermal.string() << '\n' << paths.rgb.string() << '\n'
                      << paths.lidar.string() << '\n' << paths.points.string() << '\n';
        } else if (prepare->parsed()) {
            const auto summary = fb::cli::cmd_prepare(config);
            std::cout << fb::cli::to_json(summary).dump(2) << '\n';
        } else if (train->parsed()) {
            fb::cli::TrainOptions opt;
            if (strategy) opt.strategy = fb::parse_strategy(*strategy);
            opt.trials = trials;
            if (trial_range) opt.range = fb::cli::parse_trial_range(*trial_range);
            const auto results = fb::cli::cmd_train(config, opt);
            for (const auto& r : results)
                std::cout << "trial " << r.trial_index << " best_val_auc " << r.best_val_auc << " best_epoch "
                          << r.best_epoch << " epochs " << r.history.size() << '\n';
        } else if (evaluate->parsed()) {
            std::optional<std::filesystem::path> dir;
            if (out) dir = *out;
            const auto files = fb::cli::cmd_evaluate(config, dir);
            std::cout << files.metrics.string() << '\n' << files.summary.string() << '\n';
            for (const auto& p : files.plots) std::cout << p.string() << '\n';
            if (files.gating_table) std::cout << files.gating_table->string() << '\n';
        } else if (tune->parsed()) {
            const fb::Strategy s = strategy ? fb::parse_strategy(*strategy) : config.model.strategy;
            const auto rows = fb::cli::cmd_tune_lr(config, s, rates.empty() ? fb::cli::default_lr_grid() : rates, tune_trials);
            for (const auto& r : rows) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "lr %-8g best val AUC %.4f +- %.4f", r.learning_rate,
                              r.best_val_auc.mean, r.best_val_auc.two_se);
                std::cout << buf << '\n';
            }
        }
    } catch (const std::exception& e) {
        fb::log::error(e.what());
        return 1;
    }
    return 0;
}
