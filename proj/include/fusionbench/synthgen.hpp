// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic aligned thermal / RGB / elevation scenes with planted features:
// middens are warm spots with a shallow scrape, mounds are elevation bumps,
// water is a cool, blue strip spanning several cells of one grid row.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "fusionbench/ingest.hpp"

namespace fusionbench {

struct SceneSpec {
    int n_rows = 6;
    int n_cols = 12;
    double cell_size_m = 20.0;
    double thermal_resolution_m = 0.5;
    double rgb_resolution_m = 0.05;
    double lidar_resolution_m = 0.1;
    Point2 origin{500000.0, 7300000.0};

    int midden_count = 4;
    int mound_count = 4;
    /// Number of water strips; each covers `water_strip_cells` cells.
    int water_count = 2;
    int water_strip_cells = 3;

    double midden_thermal_amp = 3.0;
    double midden_lidar_depth = 0.6;
    double mound_lidar_height = 1.5;
    double water_blue_shift = 0.25;
    double water_thermal_offset = 3.0;  // subtracted

    double midden_radius_m = 3.0;
    double mound_radius_m = 4.5;
    double water_half_width_m = 3.0;

    double thermal_base = 30.0;
    std::array<double, 3> rgb_base{0.45, 0.40, 0.30};
    double lidar_base = 100.0;
    /// Background noise std per modality (thermal, rgb, lidar).
    std::array<double, 3> noise_std{0.5, 0.05, 0.1};
    /// Lattice spacing of the spatially correlated noise component.
    double noise_correlation_m = 2.0;

    std::uint64_t seed = 0;

    std::size_t water_cells() const noexcept { return static_cast<std::size_t>(water_count) * water_strip_cells; }

    void validate() const {
        if (n_rows <= 0 || n_cols <= 0) throw std::invalid_argument("scene grid must be non-empty");
        if (midden_count < 0 || mound_count < 0 || water_count < 0 || water_strip_cells < 1)
            throw std::invalid_argument("feature counts must be non-negative");
        if (water_count > 0 && water_strip_cells > n_cols)
            throw std::invalid_argument("water strip is longer than the grid is wide");
        const std::size_t cells = static_cast<std::size_t>(n_rows) * n_cols;
        if (static_cast<std::size_t>(midden_count) + mound_count + water_cells() > cells)
            throw std::invalid_argument("feature counts exceed the " + std::to_string(cells) + " available cells");
        for (double r : {thermal_resolution_m, rgb_resolution_m, lidar_resolution_m}) tile_side(cell_size_m, r);
        for (double r : {midden_radius_m, mound_radius_m, water_half_width_m})
            if (!(r > 0) || 2 * r >= cell_size_m) throw std::invalid_argument("feature radius must fit inside one cell");
    }
};

/// Scale every signature amplitude by (1 - level): level 0 keeps the spec's
/// amplitudes, level 1 removes all signal.
inline SceneSpec difficulty_dial(SceneSpec spec, double level) {
    if (!(level >= 0.0 && level <= 1.0)) throw std::invalid_argument("difficulty level must lie in [0, 1]");
    const double k = 1.0 - level;
    spec.midden_thermal_amp *= k;
    spec.midden_lidar_depth *= k;
    spec.mound_lidar_height *= k;
    spec.water_blue_shift *= k;
    spec.water_thermal_offset *= k;
    return spec;
}

struct Scene {
    RasterMosaic thermal;
    RasterMosaic rgb;
    RasterMosaic lidar;
    std::vector<FeaturePoint> points;
    /// Ground-truth label of every non-empty cell.
    std::map<GridCell, ClassLabel> planted;

    RasterMosaic& mosaic(Modality m) {
        switch (m) {
            case Modality::thermal: return thermal;
            case Modality::rgb: return rgb;
            case Modality::lidar: return lidar;
        }
        throw std::logic_error("bad modality");
    }
    const RasterMosaic& mosaic(Modality m) const { return const_cast<Scene*>(this)->mosaic(m); }
};

namespace detail {

/// Additive unit-scale background noise: white noise mixed with a
/// bilinearly interpolated coarse lattice.
inline void add_background(RasterMosaic& m, double base, int band, double noise_std, double corr_m, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const int lat_w = static_cast<int>(std::ceil(m.width_m() / corr_m)) + 2;
    const int lat_h = static_cast<int>(std::ceil(m.height_m() / corr_m)) + 2;
    std::vector<double> lattice(static_cast<std::size_t>(lat_w) * lat_h);
    for (auto& v : lattice) v = normal(rng);
    for (int y = 0; y < m.height; ++y) {
        const double fy = (y + 0.5) * m.resolution_m / corr_m;
        const int iy = static_cast<int>(fy);
        const double ty = fy - iy;
        for (int x = 0; x < m.width; ++x) {
            const double fx = (x + 0.5) * m.resolution_m / corr_m;
            const int ix = static_cast<int>(fx);
            const double tx = fx - ix;
            const double smooth =
                (1 - ty) * ((1 - tx) * lattice[iy * lat_w + ix] + tx * lattice[iy * lat_w + ix + 1]) +
                ty * ((1 - tx) * lattice[(iy + 1) * lat_w + ix] + tx * lattice[(iy + 1) * lat_w + ix + 1]);
            m.at(band, y, x) = static_cast<float>(base + noise_std * (0.6 * normal(rng) + 0.8 * smooth));
        }
    }
}

/// Add amp * exp(-d^2 / (2 sigma^2)) for pixel centres within `radius`
/// (sigma = radius / 3) of `center`.
inline void add_blob(RasterMosaic& m, int band, Point2 center, double radius, double amp) {
    if (amp == 0.0) return;
    const double sigma = radius / 3.0;
    const int x0 = std::max(0, static_cast<int>(std::floor((center.easting - radius - m.origin.easting) / m.resolution_m)));
    const int x1 = std::min(m.width - 1, static_cast<int>(std::ceil((center.easting + radius - m.origin.easting) / m.resolution_m)));
    const int y0 = std::max(0, static_cast<int>(std::floor((m.origin.northing - center.northing - radius) / m.resolution_m)));
    const int y1 = std::min(m.height - 1, static_cast<int>(std::ceil((m.origin.northing - center.northing + radius) / m.resolution_m)));
    for (int y = y0; y <= y1; ++y) {
        const double py = m.origin.northing - (y + 0.5) * m.resolution_m;
        for (int x = x0; x <= x1; ++x) {
            const double px = m.origin.easting + (x + 0.5) * m.resolution_m;
            const double d2 = (px - center.easting) * (px - center.easting) + (py - center.northing) * (py - center.northing);
            if (d2 <= radius * radius) m.at(band, y, x) += static_cast<float>(amp * std::exp(-d2 / (2 * sigma * sigma)));
        }
    }
}

/// Horizontal band between eastings [e0, e1] centred on `northing`, with a
/// Gaussian cross-section truncated at `half_width`.
inline void add_strip(RasterMosaic& m, int band, double e0, double e1, double northing, double half_width, double amp) {
    if (amp == 0.0) return;
    const double sigma = half_width / 3.0;
    for (int y = 0; y < m.height; ++y) {
        const double dy = (m.origin.northing - (y + 0.5) * m.resolution_m) - northing;
        if (std::abs(dy) > half_width) continue;
        const float v = static_cast<float>(amp * std::exp(-dy * dy / (2 * sigma * sigma)));
        for (int x = 0; x < m.width; ++x) {
            const double px = m.origin.easting + (x + 0.5) * m.resolution_m;
            if (px >= e0 && px <= e1) m.at(band, y, x) += v;
        }
    }
}

}  // namespace detail

inline Scene generate_scene(const SceneSpec& spec) {
    spec.validate();
    Scene scene;
    const std::array<double, 3> res{spec.thermal_resolution_m, spec.rgb_resolution_m, spec.lidar_resolution_m};
    for (Modality m : kModalities) {
        RasterMosaic& mo = scene.mosaic(m);
        mo.modality = m;
        mo.bands = band_count(m);
        mo.resolution_m = res[index_of(m)];
        mo.origin = spec.origin;
        mo.width = spec.n_cols * tile_side(spec.cell_size_m, mo.resolution_m);
        mo.height = spec.n_rows * tile_side(spec.cell_size_m, mo.resolution_m);
        mo.pixels.assign(static_cast<std::size_t>(mo.bands) * mo.width * mo.height, 0.0f);
    }
    // Independent streams: the background never depends on feature placement.
    std::seed_seq noise_seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 11u};
    std::mt19937_64 noise_rng(noise_seq);
    std::seed_seq place_seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 23u};
    std::mt19937_64 place_rng(place_seq);

    detail::add_background(scene.thermal, spec.thermal_base, 0, spec.noise_std[0], spec.noise_correlation_m, noise_rng);
    for (int b = 0; b < 3; ++b)
        detail::add_background(scene.rgb, spec.rgb_base[b], b, spec.noise_std[1], spec.noise_correlation_m, noise_rng);
    detail::add_background(scene.lidar, spec.lidar_base, 0, spec.noise_std[2], spec.noise_correlation_m, noise_rng);

    const double cs = spec.cell_size_m;
    auto cell_west = [&](int col) { return spec.origin.easting + col * cs; };
    auto cell_north = [&](int row) { return spec.origin.northing - row * cs; };
    std::set<GridCell> used;

    // Water strips first: they need contiguous free runs within one row.
    for (int w = 0; w < spec.water_count; ++w) {
        std::uniform_int_distribution<int> row_d(0, spec.n_rows - 1), col_d(0, spec.n_cols - spec.water_strip_cells);
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            const int row = row_d(place_rng), c0 = col_d(place_rng);
            bool free = true;
            for (int c = c0; c < c0 + spec.water_strip_cells; ++c) free = free && !used.count({row, c});
            if (!free) continue;
            const double hw = spec.water_half_width_m;
            std::uniform_real_distribution<double> off(hw, cs - hw);
            const double northing = cell_north(row) - off(place_rng);
            const double e0 = cell_west(c0) + hw, e1 = cell_west(c0 + spec.water_strip_cells) - hw;
            detail::add_strip(scene.thermal, 0, e0, e1, northing, hw, -spec.water_thermal_offset);
            detail::add_strip(scene.rgb, 0, e0, e1, northing, hw, -0.5 * spec.water_blue_shift);
            detail::add_strip(scene.rgb, 1, e0, e1, northing, hw, -0.5 * spec.water_blue_shift);
            detail::add_strip(scene.rgb, 2, e0, e1, northing, hw, spec.water_blue_shift);
            for (int c = c0; c < c0 + spec.water_strip_cells; ++c) {
                used.insert({row, c});
                scene.planted[{row, c}] = ClassLabel::water;
                scene.points.push_back({ClassLabel::water, {cell_west(c) + 0.5 * cs, northing}});
            }
            placed = true;
        }
        if (!placed) throw std::invalid_argument("could not place water strip " + std::to_string(w) + " in free cells");
    }

    std::vector<GridCell> free_cells;
    for (int r = 0; r < spec.n_rows; ++r)
        for (int c = 0; c < spec.n_cols; ++c)
            if (!used.count({r, c})) free_cells.push_back({r, c});
    std::shuffle(free_cells.begin(), free_cells.end(), place_rng);
    std::size_t next = 0;
    auto plant = [&](ClassLabel cls, int count, double radius, auto&& paint) {
        std::uniform_real_distribution<double> off(radius, cs - radius);
        for (int i = 0; i < count; ++i) {
            const GridCell cell = free_cells.at(next++);
            const Point2 center{cell_west(cell.col) + off(place_rng), cell_north(cell.row) - off(place_rng)};
            paint(center);
            scene.planted[cell] = cls;
            scene.points.push_back({cls, center});
        }
    };
    plant(ClassLabel::midden, spec.midden_count, spec.midden_radius_m, [&](Point2 p) {
        detail::add_blob(scene.thermal, 0, p, spec.midden_radius_m, spec.midden_thermal_amp);
        detail::add_blob(scene.lidar, 0, p, spec.midden_radius_m, -spec.midden_lidar_depth);
    });
    plant(ClassLabel::mound, spec.mound_count, spec.mound_radius_m, [&](Point2 p) {
        detail::add_blob(scene.lidar, 0, p, spec.mound_radius_m, spec.mound_lidar_height);
    });
    return scene;
}

struct ScenePaths {
    std::filesystem::path thermal, rgb, lidar, points;
};

inline ScenePaths scene_paths(const std::filesystem::path& dir) {
    return {dir / "thermal.tif", dir / "rgb.tif", dir / "lidar.tif", dir / "points.csv"};
}

inline ScenePaths save_scene(const Scene& scene, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto p = scene_paths(dir);
    save_mosaic(p.thermal, scene.thermal);
    save_mosaic(p.rgb, scene.rgb);
    save_mosaic(p.lidar, scene.lidar);
    save_points(p.points, scene.points);
    return p;
}

}  // namespace fusionbench
