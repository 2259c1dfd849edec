// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// RunConfig: one YAML file with sections for paths, grid, split, rebalance,
// model, train and scene. Unknown keys are rejected.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "fusionbench/dataset.hpp"
#include "fusionbench/models.hpp"
#include "fusionbench/synthgen.hpp"
#include "fusionbench/training.hpp"

namespace fusionbench {

inline constexpr const char* kPretrainedEnv = "FUSIONBENCH_PRETRAINED";

struct RunPaths {
    std::filesystem::path thermal = "scene/thermal.tif";
    std::filesystem::path rgb = "scene/rgb.tif";
    std::filesystem::path lidar = "scene/lidar.tif";
    std::filesystem::path points = "scene/points.csv";
    std::filesystem::path output = "run";
    std::filesystem::path pretrained;  // empty: no pretrained weights

    std::filesystem::path data_dir() const { return output / "data"; }
    std::filesystem::path trials_dir() const { return output / "trials"; }
    std::filesystem::path report_dir() const { return output / "report"; }
};

struct RunConfig {
    RunPaths paths;
    double cell_size_m = 20.0;
    SplitSpec split;
    RebalancePlan rebalance;
    FusionModelSpec model;
    TrainConfig train;
    SceneSpec scene;
};

namespace detail {

class YamlSection {
public:
    YamlSection(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) throw std::invalid_argument("config: '" + name_ + "' must be a mapping");
    }

    template <typename V>
    void read(const std::string& key, V& out) {
        known_.insert(key);
        if (!node_ || !node_.IsMap() || !node_[key]) return;
        try {
            out = node_[key].as<V>();
        } catch (const YAML::Exception& e) {
            throw std::invalid_argument("config: bad value for " + name_ + "." + key + ": " + e.what());
        }
    }

    void read_path(const std::string& key, std::filesystem::path& out) {
        std::string s = out.string();
        read(key, s);
        out = s;
    }

    YAML::Node child(const std::string& key) {
        known_.insert(key);
        return node_ && node_.IsMap() ? node_[key] : YAML::Node();
    }

    const std::string& name() const { return name_; }

    void finish() const {
        if (!node_ || !node_.IsMap()) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!known_.count(key)) throw std::invalid_argument("config: unknown key '" + name_ + "." + key + "'");
        }
    }

private:
    YAML::Node node_;
    std::string name_;
    std::set<std::string> known_;
};

inline ColumnRange read_range(YamlSection& sec, const std::string& key, ColumnRange def) {
    std::vector<int> v{def.begin, def.end};
    sec.read(key, v);
    if (v.size() != 2) throw std::invalid_argument("config: " + sec.name() + "." + key + " must be [begin, end]");
    return {v[0], v[1]};
}

}  // namespace detail

/// Parse a config document. Relative paths resolve against `base_dir`.
inline RunConfig parse_run_config(const YAML::Node& root, const std::filesystem::path& base_dir = {}) {
    if (root && !root.IsNull() && !root.IsMap()) throw std::invalid_argument("config: top level must be a mapping");
    RunConfig c;
    detail::YamlSection top(root, "<root>");

    {
        detail::YamlSection s(top.child("paths"), "paths");
        s.read_path("thermal", c.paths.thermal);
        s.read_path("rgb", c.paths.rgb);
        s.read_path("lidar", c.paths.lidar);
        s.read_path("points", c.paths.points);
        s.read_path("output", c.paths.output);
        s.read_path("pretrained", c.paths.pretrained);
        s.finish();
    }
    {
        detail::YamlSection s(top.child("grid"), "grid");
        s.read("cell_size_m", c.cell_size_m);
        s.finish();
    }
    {
        detail::YamlSection s(top.child("split"), "split");
        c.split.train = detail::read_range(s, "train_cols", c.split.train);
        c.split.val = detail::read_range(s, "val_cols", c.split.val);
        c.split.test = detail::read_range(s, "test_cols", c.split.test);
        s.finish();
    }
    {
        detail::YamlSection s(top.child("rebalance"), "rebalance");
        s.read("target_per_class", c.rebalance.target_per_class);
        s.finish();
    }
    {
        detail::YamlSection s(top.child("model"), "model");
        std::string strategy = to_string(c.model.strategy), family = to_string(c.model.backbone.family);
        s.read("strategy", strategy);
        s.read("backbone", family);
        c.model.strategy = parse_strategy(strategy);
        c.model.backbone.family = parse_backbone_family(family);
        s.read("pretrained", c.model.backbone.pretrained);
        s.read("feature_dim", c.model.backbone.feature_dim);
        s.read("tiny_width", c.model.backbone.tiny_width);
        s.read("num_classes", c.model.num_classes);
        s.read("per_modality_feature_dim", c.model.per_modality_feature_dim);
        s.read("gate_hidden_dim", c.model.gate_hidden_dim);
        s.read("detach_gate_input", c.model.detach_gate_input);
        s.finish();
    }
    {
        detail::YamlSection s(top.child("train"), "train");
        s.read("batch_size", c.train.batch_size);
        const YAML::Node lr = s.child("learning_rate");
        if (lr) {
            if (lr.IsScalar()) {
                const double v = lr.as<double>();
                for (Strategy st : kStrategies) c.train.learning_rate[st] = v;
            } else {
                detail::YamlSection l(lr, "train.learning_rate");
                for (Strategy st : kStrategies) l.read(to_string(st), c.train.learning_rate[st]);
                l.finish();
            }
        }
        s.read("adam_beta1", c.train.adam_beta1);
        s.read("adam_beta2", c.train.adam_beta2);
        s.read("adam_eps", c.train.adam_eps);
        s.read("patience_epochs", c.train.patience_epochs);
        s.read("max_epochs", c.train.max_epochs);
        s.read("n_trials", c.train.n_trials);
        s.finish();
    }
    {
        detail::YamlSection s(top.child("scene"), "scene");
        auto& sc = c.scene;
        s.read("n_rows", sc.n_rows);
        s.read("n_cols", sc.n_cols);
        s.read("cell_size_m", sc.cell_size_m);
        s.read("thermal_resolution_m", sc.thermal_resolution_m);
        s.read("rgb_resolution_m", sc.rgb_resolution_m);
        s.read("lidar_resolution_m", sc.lidar_resolution_m);
        std::vector<double> origin{sc.origin.easting, sc.origin.northing};
        s.read("origin", origin);
        if (origin.size() != 2) throw std::invalid_argument("config: scene.origin must be [easting, northing]");
        sc.origin = {origin[0], origin[1]};
        s.read("midden_count", sc.midden_count);
        s.read("mound_count", sc.mound_count);
        s.read("water_count", sc.water_count);
        s.read("water_strip_cells", sc.water_strip_cells);
        s.read("midden_thermal_amp", sc.midden_thermal_amp);
        s.read("midden_lidar_depth", sc.midden_lidar_depth);
        s.read("mound_lidar_height", sc.mound_lidar_height);
        s.read("water_blue_shift", sc.water_blue_shift);
        s.read("water_thermal_offset", sc.water_thermal_offset);
        s.read("midden_radius_m", sc.midden_radius_m);
        s.read("mound_radius_m", sc.mound_radius_m);
        s.read("water_half_width_m", sc.water_half_width_m);
        s.read("thermal_base", sc.thermal_base);
        s.read("lidar_base", sc.lidar_base);
        std::vector<double> rgb_base(sc.rgb_base.begin(), sc.rgb_base.end());
        s.read("rgb_base", rgb_base);
        std::vector<double> noise(sc.noise_std.begin(), sc.noise_std.end());
        s.read("noise_std", noise);
        if (rgb_base.size() != 3 || noise.size() != 3)
            throw std::invalid_argument("config: scene.rgb_base and scene.noise_std need 3 values");
        std::copy(rgb_base.begin(), rgb_base.end(), sc.rgb_base.begin());
        std::copy(noise.begin(), noise.end(), sc.noise_std.begin());
        s.read("noise_correlation_m", sc.noise_correlation_m);
        s.read("seed", sc.seed);
        s.finish();
    }
    top.finish();

    for (auto* p : {&c.paths.thermal, &c.paths.rgb, &c.paths.lidar, &c.paths.points, &c.paths.output, &c.paths.pretrained})
        if (!p->empty() && p->is_relative() && !base_dir.empty()) *p = base_dir / *p;
    if (const char* env = std::getenv(kPretrainedEnv); env && *env) c.paths.pretrained = env;

    c.split.validate();
    c.train.validate();
    c.model.backbone.validate();
    if (c.rebalance.target_per_class < 1) throw std::invalid_argument("config: rebalance.target_per_class must be >= 1");
    if (!(c.cell_size_m > 0)) throw std::invalid_argument("config: grid.cell_size_m must be > 0");
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("config file not found: " + path.string());
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return parse_run_config(root, path.parent_path());
}

}  // namespace fusionbench
