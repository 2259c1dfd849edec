// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>

#include <unistd.h>

#include <gtest/gtest.h>

#include "fusionbench/synthgen.hpp"

using namespace fusionbench;
namespace fs = std::filesystem;

namespace {

/// Coarse rasters so each scene is a few hundred kilobytes.
SceneSpec small_spec(std::uint64_t seed = 3) {
    SceneSpec s;
    s.n_rows = 5;
    s.n_cols = 8;
    s.thermal_resolution_m = 2.0;
    s.rgb_resolution_m = 0.5;
    s.lidar_resolution_m = 1.0;
    s.midden_count = 5;
    s.mound_count = 6;
    s.water_count = 2;
    s.water_strip_cells = 3;
    s.seed = seed;
    return s;
}

double max_abs_deviation(const Tensor<float>& tile, int band, double base) {
    const std::size_t plane = tile.size() / tile.dim(0);
    double worst = 0;
    for (std::size_t i = 0; i < plane; ++i) worst = std::max(worst, std::abs(tile[band * plane + i] - base));
    return worst;
}

}  // namespace

TEST(Synth, SameSeedSameSceneDifferentSeedDifferentScene) {
    const auto a = generate_scene(small_spec(3)), b = generate_scene(small_spec(3)), c = generate_scene(small_spec(4));
    for (Modality m : kModalities) {
        EXPECT_EQ(a.mosaic(m).pixels, b.mosaic(m).pixels);
        EXPECT_NE(a.mosaic(m).pixels, c.mosaic(m).pixels);
    }
    EXPECT_EQ(a.planted, b.planted);
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        EXPECT_EQ(a.points[i].position.easting, b.points[i].position.easting);
        EXPECT_EQ(a.points[i].position.northing, b.points[i].position.northing);
    }
}

TEST(Synth, RastersAreAlignedAndPointsLabelThePlantedCells) {
    const auto spec = small_spec();
    const auto scene = generate_scene(spec);
    EXPECT_NO_THROW(check_alignment({&scene.thermal, &scene.rgb, &scene.lidar}));
    const GridSpec grid = grid_for(scene.thermal, spec.cell_size_m);
    EXPECT_EQ(grid.n_rows, spec.n_rows);
    EXPECT_EQ(grid.n_cols, spec.n_cols);
    const auto labels = assign_labels(grid, scene.points);
    std::array<int, kNumClasses> counts{};
    for (const auto& [cell, label] : labels) {
        const auto it = scene.planted.find(cell);
        EXPECT_EQ(label, it == scene.planted.end() ? ClassLabel::empty : it->second) << cell.row << "," << cell.col;
        ++counts[index_of(label)];
    }
    EXPECT_EQ(counts[1], spec.midden_count);
    EXPECT_EQ(counts[2], spec.mound_count);
    EXPECT_EQ(counts[3], spec.water_count * spec.water_strip_cells);

    // Water strips occupy consecutive cells of a single row.
    std::map<int, std::vector<int>> water_rows;
    for (const auto& [cell, label] : scene.planted)
        if (label == ClassLabel::water) water_rows[cell.row].push_back(cell.col);
    for (auto& [row, cols] : water_rows) {
        std::sort(cols.begin(), cols.end());
        for (std::size_t i = 0; i + 1 < cols.size(); ++i)
            if (cols[i + 1] != cols[i] + 1) EXPECT_EQ((i + 1) % spec.water_strip_cells, 0u);
    }
}

TEST(Synth, SignaturesStayInsideTheirCellsAndModalities) {
    auto spec = small_spec(7);
    spec.noise_std = {0.0, 0.0, 0.0};
    auto scene = generate_scene(spec);
    const GridSpec grid = grid_for(scene.thermal, spec.cell_size_m);
    const auto built = build_samples(scene.thermal, scene.rgb, scene.lidar, grid, assign_labels(grid, scene.points));
    ASSERT_EQ(built.samples.size(), static_cast<std::size_t>(spec.n_rows * spec.n_cols));
    for (const auto& s : built.samples) {
        const bool midden = s.label == ClassLabel::midden, mound = s.label == ClassLabel::mound,
                   water = s.label == ClassLabel::water;
        EXPECT_EQ(max_abs_deviation(s.thermal, 0, spec.thermal_base) > 1e-4, midden || water) << to_string(s.label);
        EXPECT_EQ(max_abs_deviation(s.lidar, 0, spec.lidar_base) > 1e-4, midden || mound) << to_string(s.label);
        EXPECT_EQ(max_abs_deviation(s.rgb, 2, spec.rgb_base[2]) > 1e-4, water) << to_string(s.label);
        if (water) {
            EXPECT_LT(*std::min_element(s.thermal.values().begin(), s.thermal.values().end()), spec.thermal_base);
        }
        if (mound) {
            EXPECT_GT(*std::max_element(s.lidar.values().begin(), s.lidar.values().end()), spec.lidar_base + 0.5);
        }
    }
}

TEST(Synth, LevelOneLeavesOnlyTheBackground) {
    const auto spec = small_spec(9);
    const auto faint = generate_scene(difficulty_dial(spec, 1.0));
    auto bare = spec;
    bare.midden_count = bare.mound_count = bare.water_count = 0;
    const auto background = generate_scene(bare);
    EXPECT_EQ(faint.thermal.pixels, background.thermal.pixels);
    EXPECT_EQ(faint.rgb.pixels, background.rgb.pixels);
    EXPECT_EQ(faint.lidar.pixels, background.lidar.pixels);
    EXPECT_EQ(faint.planted.size(), 5u + 6u + 6u);
    EXPECT_TRUE(background.points.empty());
}

TEST(Synth, DifficultyDialScalesAmplitudes) {
    const SceneSpec spec;
    const auto same = difficulty_dial(spec, 0.0);
    EXPECT_EQ(same.midden_thermal_amp, spec.midden_thermal_amp);
    const auto half = difficulty_dial(spec, 0.5);
    EXPECT_DOUBLE_EQ(half.midden_thermal_amp, 0.5 * spec.midden_thermal_amp);
    EXPECT_DOUBLE_EQ(half.midden_lidar_depth, 0.5 * spec.midden_lidar_depth);
    EXPECT_DOUBLE_EQ(half.mound_lidar_height, 0.5 * spec.mound_lidar_height);
    EXPECT_DOUBLE_EQ(half.water_blue_shift, 0.5 * spec.water_blue_shift);
    EXPECT_DOUBLE_EQ(half.water_thermal_offset, 0.5 * spec.water_thermal_offset);
    const auto none = difficulty_dial(spec, 1.0);
    EXPECT_EQ(none.mound_lidar_height, 0.0);
    EXPECT_EQ(none.noise_std, spec.noise_std);
    EXPECT_THROW(difficulty_dial(spec, -0.1), std::invalid_argument);
    EXPECT_THROW(difficulty_dial(spec, 1.5), std::invalid_argument);
    EXPECT_THROW(difficulty_dial(spec, std::nan("")), std::invalid_argument);
}

TEST(Synth, ZeroFeaturesAndInvalidSpecs) {
    auto spec = small_spec();
    spec.midden_count = spec.mound_count = spec.water_count = 0;
    const auto scene = generate_scene(spec);
    EXPECT_TRUE(scene.points.empty());
    EXPECT_TRUE(scene.planted.empty());

    auto crowded = small_spec();
    crowded.midden_count = 40;
    EXPECT_THROW(generate_scene(crowded), std::invalid_argument);
    auto wide = small_spec();
    wide.mound_radius_m = 10.0;
    EXPECT_THROW(generate_scene(wide), std::invalid_argument);
    auto odd = small_spec();
    odd.rgb_resolution_m = 0.3;
    EXPECT_THROW(generate_scene(odd), std::invalid_argument);
}

TEST(Synth, DefaultSceneHasNativeTileSides) {
    const SceneSpec spec;
    EXPECT_EQ(tile_side(spec.cell_size_m, spec.thermal_resolution_m), 40);
    EXPECT_EQ(tile_side(spec.cell_size_m, spec.rgb_resolution_m), 400);
    EXPECT_EQ(tile_side(spec.cell_size_m, spec.lidar_resolution_m), 200);
    const auto scene = generate_scene(spec);
    EXPECT_EQ(scene.thermal.width, 12 * 40);
    EXPECT_EQ(scene.rgb.height, 6 * 400);
    EXPECT_EQ(scene.lidar.width, 12 * 200);
    EXPECT_EQ(scene.planted.size(), 4u + 4u + 6u);
}

TEST(Synth, SavedSceneLoadsBackThroughIngest) {
    const auto spec = small_spec(11);
    const auto scene = generate_scene(spec);
    const auto dir = fs::temp_directory_path() / ("fusionbench_synth_" + std::to_string(::getpid()));
    const auto paths = save_scene(scene, dir);
    const auto t = load_mosaic(paths.thermal, Modality::thermal);
    const auto r = load_mosaic(paths.rgb, Modality::rgb);
    const auto l = load_mosaic(paths.lidar, Modality::lidar);
    EXPECT_EQ(t.pixels, scene.thermal.pixels);
    EXPECT_EQ(r.pixels, scene.rgb.pixels);
    EXPECT_EQ(l.pixels, scene.lidar.pixels);
    EXPECT_DOUBLE_EQ(t.origin.easting, spec.origin.easting);
    const auto pts = load_points(paths.points, t);
    EXPECT_EQ(pts.rejected_outside, 0u);
    EXPECT_EQ(assign_labels(grid_for(t, spec.cell_size_m), pts.points).size(), 40u);
    fs::remove_all(dir);
}
