// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "fusionbench/cli.hpp"

using namespace fusionbench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("fusionbench_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
    std::ofstream(path) << text;
    return path;
}

std::string expect_invalid(const std::string& yaml) {
    try {
        parse_run_config(YAML::Load(yaml));
    } catch (const std::invalid_argument& e) {
        return e.what();
    }
    ADD_FAILURE() << "no error for:\n" << yaml;
    return {};
}

#ifdef FUSIONBENCH_CLI_PATH
int run_cli(const std::string& args, std::string* output = nullptr) {
    const fs::path log = fs::temp_directory_path() / ("fusionbench_cli_out_" + std::to_string(::getpid()) + ".txt");
    const std::string cmd = std::string("\"") + FUSIONBENCH_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    if (output) {
        std::ifstream in(log);
        std::ostringstream ss;
        ss << in.rdbuf();
        *output = ss.str();
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

/// A coarse scene and a short training schedule for the end-to-end run.
const char* kTinyConfig = R"(paths:
  thermal: scene/thermal.tif
  rgb: scene/rgb.tif
  lidar: scene/lidar.tif
  points: scene/points.csv
  output: run
split:
  train_cols: [0, 6]
  val_cols: [6, 8]
  test_cols: [8, 10]
rebalance:
  target_per_class: 8
model:
  strategy: late
  backbone: tiny_cnn
  feature_dim: 8
  tiny_width: 4
  per_modality_feature_dim: 8
  gate_hidden_dim: 8
train:
  batch_size: 16
  learning_rate: {early: 0.01, late: 0.01, moe: 0.01}
  patience_epochs: 1
  max_epochs: 2
  n_trials: 2
scene:
  n_rows: 6
  n_cols: 10
  thermal_resolution_m: 2.0
  rgb_resolution_m: 0.5
  lidar_resolution_m: 1.0
  midden_count: 10
  mound_count: 10
  water_count: 4
  water_strip_cells: 2
  seed: 5
)";

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
    const auto c = parse_run_config(YAML::Load("{}"));
    EXPECT_EQ(c.cell_size_m, 20.0);
    EXPECT_EQ(c.split.train.end, 50);
    EXPECT_EQ(c.split.test.end, 81);
    EXPECT_EQ(c.rebalance.target_per_class, 88);
    EXPECT_EQ(c.train.batch_size, 64);
    EXPECT_EQ(c.train.patience_epochs, 10);
    EXPECT_EQ(c.train.n_trials, 50);
    EXPECT_EQ(c.model.backbone.family, BackboneFamily::paper_resnet50);
    EXPECT_EQ(c.paths.data_dir(), fs::path("run") / "data");
}

TEST(Config, ParsesSectionsAndResolvesRelativePaths) {
    const auto dir = scratch("parse");
    const auto path = write_file(dir / "run.yaml", kTinyConfig);
    const auto c = load_run_config(path);
    EXPECT_EQ(c.paths.thermal, dir / "scene/thermal.tif");
    EXPECT_EQ(c.paths.trials_dir(), dir / "run" / "trials");
    EXPECT_EQ(c.split.val.begin, 6);
    EXPECT_EQ(c.rebalance.target_per_class, 8);
    EXPECT_EQ(c.model.strategy, Strategy::late);
    EXPECT_EQ(c.model.backbone.family, BackboneFamily::tiny_cnn);
    EXPECT_EQ(c.model.backbone.tiny_width, 4);
    EXPECT_DOUBLE_EQ(c.train.lr_for(Strategy::moe), 0.01);
    EXPECT_EQ(c.train.max_epochs, 2);
    EXPECT_EQ(c.scene.n_cols, 10);
    EXPECT_EQ(c.scene.seed, 5u);

    const auto scalar = parse_run_config(YAML::Load("train: {learning_rate: 0.005}"));
    for (Strategy s : kStrategies) EXPECT_DOUBLE_EQ(scalar.train.lr_for(s), 0.005);
    const auto absolute = parse_run_config(YAML::Load("paths: {output: /tmp/abs}"), dir);
    EXPECT_EQ(absolute.paths.output, fs::path("/tmp/abs"));
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
    EXPECT_NE(expect_invalid("modle: {}").find("'<root>.modle'"), std::string::npos);
    EXPECT_NE(expect_invalid("train: {batchsize: 3}").find("train.batchsize"), std::string::npos);
    EXPECT_NE(expect_invalid("train: {learning_rate: {mo: 0.1}}").find("train.learning_rate.mo"), std::string::npos);
    EXPECT_NE(expect_invalid("train: {batch_size: many}").find("train.batch_size"), std::string::npos);
    expect_invalid("split: {train_cols: [0, 1, 2]}");
    expect_invalid("split: {train_cols: [0, 10], val_cols: [5, 12]}");
    expect_invalid("model: {strategy: stacked}");
    expect_invalid("model: {backbone: tiny_cnn, pretrained: true}");
    expect_invalid("train: {patience_epochs: 0}");
    expect_invalid("grid: [1, 2]");
    EXPECT_THROW(load_run_config("/nonexistent/run.yaml"), std::runtime_error);
}

TEST(Config, EnvironmentOverridesPretrainedPath) {
    ::setenv(kPretrainedEnv, "/weights/resnet50.fbt", 1);
    const auto c = parse_run_config(YAML::Load("paths: {pretrained: local.fbt}"), "/base");
    ::unsetenv(kPretrainedEnv);
    EXPECT_EQ(c.paths.pretrained, fs::path("/weights/resnet50.fbt"));
    const auto d = parse_run_config(YAML::Load("paths: {pretrained: local.fbt}"), "/base");
    EXPECT_EQ(d.paths.pretrained, fs::path("/base/local.fbt"));
}

TEST(Config, ShippedExamplesParse) {
    const fs::path configs = fs::path(FUSIONBENCH_SOURCE_DIR) / "configs";
    const auto desk = load_run_config(configs / "desk.yaml");
    EXPECT_EQ(desk.model.backbone.family, BackboneFamily::tiny_cnn);
    EXPECT_NO_THROW(desk.scene.validate());
    EXPECT_EQ(desk.split.test.end, desk.scene.n_cols);
    const auto paper = load_run_config(configs / "paper.yaml");
    EXPECT_EQ(paper.model.backbone.family, BackboneFamily::paper_resnet50);
    EXPECT_TRUE(paper.model.backbone.pretrained);
    EXPECT_DOUBLE_EQ(paper.train.lr_for(Strategy::moe), 1e-4);
    EXPECT_EQ(paper.split.test.end, 81);
}

TEST(Cli, TrialRangeParsing) {
    const auto r = cli::parse_trial_range("3:7");
    EXPECT_EQ(r.begin, 3);
    EXPECT_EQ(r.end, 7);
    for (const char* bad : {"5:5", "7:3", "-1:2", "a:b", "3", "1:2x", ""})
        EXPECT_THROW(cli::parse_trial_range(bad), std::invalid_argument) << bad;
}

TEST(Cli, PretrainedRequestWithoutWeightsFails) {
    RunConfig c;
    c.model.backbone.pretrained = true;
    c.paths.pretrained = "/nonexistent/weights.fbt";
    EXPECT_THROW(cli::pretrained_for(c), std::runtime_error);
    c.model.backbone.pretrained = false;
    EXPECT_FALSE(cli::pretrained_for(c).has_value());
}

#ifdef FUSIONBENCH_CLI_PATH
TEST(Cli, EndToEndSynthPrepareTrainEvaluate) {
    const auto dir = scratch("e2e");
    const auto cfg = write_file(dir / "run.yaml", kTinyConfig).string();
    std::string out;
    ASSERT_EQ(run_cli("--config " + cfg + " synth", &out), 0) << out;
    EXPECT_TRUE(fs::exists(dir / "scene" / "rgb.tif"));
    ASSERT_EQ(run_cli("--config " + cfg + " prepare", &out), 0) << out;
    EXPECT_NE(out.find("\"tile_sides\""), std::string::npos) << out;
    for (const char* f : {"train/tiles.bin", "val/manifest.jsonl", "test/manifest.jsonl", "split_manifest.jsonl",
                          "band_stats.json", "prepare.json"})
        EXPECT_TRUE(fs::exists(dir / "run" / "data" / f)) << f;

    ASSERT_EQ(run_cli("--config " + cfg + " train --strategy moe", &out), 0) << out;
    EXPECT_NE(out.find("trial 1 best_val_auc"), std::string::npos) << out;
    ASSERT_EQ(run_cli("--config " + cfg + " train --trial-range 0:1", &out), 0) << out;
    ASSERT_EQ(run_cli("--config " + cfg + " train --trial-range 0:2", &out), 0) << out;
    EXPECT_TRUE(fs::exists(dir / "run" / "trials" / "late" / "trial_1" / "DONE"));
    EXPECT_TRUE(fs::exists(dir / "run" / "trials" / "moe" / "trial_0" / "checkpoint.fbck"));

    ASSERT_EQ(run_cli("--config " + cfg + " evaluate", &out), 0) << out;
    for (const char* f : {"metrics.jsonl", "summary.txt", "summary.json", "overall.png", "empty.png", "midden.png",
                          "mound.png", "water.png", "gating_table.txt", "gating_table.json"})
        EXPECT_TRUE(fs::exists(dir / "run" / "report" / f)) << f;
}

TEST(Cli, FailuresExitNonZero) {
    const auto dir = scratch("fail");
    const auto cfg = write_file(dir / "run.yaml", kTinyConfig).string();
    std::string out;
    EXPECT_NE(run_cli("synth", &out), 0);
    EXPECT_NE(run_cli("--config " + (dir / "missing.yaml").string() + " synth", &out), 0);
    EXPECT_NE(run_cli("--config " + cfg + " prepare", &out), 0);
    EXPECT_NE(out.find("not found"), std::string::npos) << out;
    EXPECT_NE(run_cli("--config " + cfg + " train --trial-range 4:2", &out), 0);
    const auto bad = write_file(dir / "bad.yaml", "train: {epochs: 3}\n").string();
    EXPECT_NE(run_cli("--config " + bad + " synth", &out), 0);
    EXPECT_NE(out.find("train.epochs"), std::string::npos) << out;
    ASSERT_EQ(run_cli("--config " + cfg + " synth", &out), 0) << out;
    ASSERT_EQ(run_cli("--config " + cfg + " prepare", &out), 0) << out;
    EXPECT_NE(run_cli("--config " + cfg + " evaluate", &out), 0);
    EXPECT_NE(out.find("no completed trials"), std::string::npos) << out;
}
#endif
