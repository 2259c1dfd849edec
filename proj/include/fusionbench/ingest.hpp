// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Raster and feature-point ingestion: load co-registered modality mosaics,
// cut them into square grid cells, and label each cell from point features.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fusionbench/io/geotiff.hpp"
#include "fusionbench/tensor.hpp"
#include "fusionbench/types.hpp"

namespace fusionbench {

struct Point2 {
    double easting = 0.0;
    double northing = 0.0;
};

/// One modality's raster. `origin` is the upper-left (west, north) corner;
/// rows run south, columns run east.
struct RasterMosaic {
    Modality modality = Modality::thermal;
    int bands = 1;
    double resolution_m = 1.0;
    Point2 origin;
    int height = 0;
    int width = 0;
    /// (bands, height, width), band-sequential.
    std::vector<float> pixels;
    /// Per-pixel validity (1 = data). Empty means every pixel is valid.
    std::vector<std::uint8_t> valid;

    double width_m() const noexcept { return width * resolution_m; }
    double height_m() const noexcept { return height * resolution_m; }

    float& at(int b, int y, int x) { return pixels[(static_cast<std::size_t>(b) * height + y) * width + x]; }
    float at(int b, int y, int x) const { return pixels[(static_cast<std::size_t>(b) * height + y) * width + x]; }

    void validate() const {
        if (bands != band_count(modality)) {
            throw std::invalid_argument(to_string(modality) + " mosaic must have " +
                                        std::to_string(band_count(modality)) + " band(s), found " +
                                        std::to_string(bands));
        }
        if (!(resolution_m > 0.0) || height <= 0 || width <= 0)
            throw std::invalid_argument(to_string(modality) + " mosaic has non-positive resolution or size");
        if (pixels.size() != static_cast<std::size_t>(bands) * height * width)
            throw std::invalid_argument(to_string(modality) + " mosaic pixel buffer has wrong size");
        if (!valid.empty() && valid.size() != static_cast<std::size_t>(height) * width)
            throw std::invalid_argument(to_string(modality) + " mosaic validity mask has wrong size");
    }

    bool contains(const Point2& p) const noexcept {
        return p.easting >= origin.easting && p.easting < origin.easting + width_m() &&
               p.northing <= origin.northing && p.northing > origin.northing - height_m();
    }
};

/// Replace no-data pixels of each band with that band's mean over valid pixels.
inline void fill_nodata(RasterMosaic& m) {
    if (m.valid.empty()) return;
    const std::size_t plane = static_cast<std::size_t>(m.height) * m.width;
    for (int b = 0; b < m.bands; ++b) {
        float* p = m.pixels.data() + b * plane;
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < plane; ++i) {
            if (m.valid[i]) {
                sum += p[i];
                ++n;
            }
        }
        const float mean = n ? static_cast<float>(sum / n) : 0.0f;
        for (std::size_t i = 0; i < plane; ++i)
            if (!m.valid[i]) p[i] = mean;
    }
}

inline RasterMosaic load_mosaic(const std::filesystem::path& path, Modality modality) {
    io::GeoRaster raw = io::read_geotiff(path);
    if (raw.bands != band_count(modality)) {
        throw std::runtime_error(path.string() + ": " + to_string(modality) + " raster must have " +
                                 std::to_string(band_count(modality)) + " band(s), found " +
                                 std::to_string(raw.bands));
    }
    if (std::abs(raw.pixel_size_x - raw.pixel_size_y) > 1e-9 * raw.pixel_size_x || !(raw.pixel_size_x > 0.0))
        throw std::runtime_error(path.string() + ": pixels must be square with positive size");
    RasterMosaic m;
    m.modality = modality;
    m.bands = raw.bands;
    m.resolution_m = raw.pixel_size_x;
    m.origin = {raw.origin_x, raw.origin_y};
    m.height = raw.height;
    m.width = raw.width;
    m.pixels = std::move(raw.pixels);
    const std::size_t plane = static_cast<std::size_t>(m.height) * m.width;
    m.valid.assign(plane, 1);
    bool any_void = false;
    for (int b = 0; b < m.bands; ++b) {
        for (std::size_t i = 0; i < plane; ++i) {
            const float v = m.pixels[b * plane + i];
            if (!std::isfinite(v) || (raw.nodata && v == static_cast<float>(*raw.nodata))) {
                m.valid[i] = 0;
                any_void = true;
            }
        }
    }
    fill_nodata(m);
    if (!any_void) m.valid.clear();
    m.validate();
    return m;
}

inline void save_mosaic(const std::filesystem::path& path, const RasterMosaic& m) {
    m.validate();
    io::GeoRaster raw;
    raw.bands = m.bands;
    raw.height = m.height;
    raw.width = m.width;
    raw.origin_x = m.origin.easting;
    raw.origin_y = m.origin.northing;
    raw.pixel_size_x = raw.pixel_size_y = m.resolution_m;
    raw.pixels = m.pixels;
    io::write_geotiff(path, raw);
}

/// Mosaics of one site must cover the same ground extent.
inline void check_alignment(const std::array<const RasterMosaic*, 3>& mosaics, double tol_m = 1e-6) {
    const RasterMosaic& ref = *mosaics[0];
    for (const auto* m : mosaics) {
        if (std::abs(m->origin.easting - ref.origin.easting) > tol_m ||
            std::abs(m->origin.northing - ref.origin.northing) > tol_m ||
            std::abs(m->width_m() - ref.width_m()) > tol_m || std::abs(m->height_m() - ref.height_m()) > tol_m) {
            throw std::invalid_argument(to_string(m->modality) + " mosaic extent differs from " +
                                        to_string(ref.modality));
        }
    }
}

// ---------------------------------------------------------------------------

struct FeaturePoint {
    ClassLabel class_label = ClassLabel::midden;
    Point2 position;
};

struct PointLoadResult {
    std::vector<FeaturePoint> points;
    std::size_t rejected_outside = 0;
};

/// Read `class,easting,northing` CSV. Points outside `extent` are dropped and
/// counted.
inline PointLoadResult load_points(const std::filesystem::path& path, const RasterMosaic& extent) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open feature points");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file (missing header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "class,easting,northing")
        throw std::runtime_error(path.string() + ": header must be 'class,easting,northing'");
    PointLoadResult out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cls, e, n;
        if (!std::getline(ss, cls, ',') || !std::getline(ss, e, ',') || !std::getline(ss, n))
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
        FeaturePoint p;
        try {
            p.class_label = parse_class(cls);
            p.position = {std::stod(e), std::stod(n)};
        } catch (const std::exception& ex) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
        if (p.class_label == ClassLabel::empty)
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": 'empty' is not a feature class");
        if (!extent.contains(p.position)) {
            ++out.rejected_outside;
            continue;
        }
        out.points.push_back(p);
    }
    return out;
}

inline void save_points(const std::filesystem::path& path, const std::vector<FeaturePoint>& points) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "class,easting,northing\n";
    out.precision(17);
    for (const auto& p : points) out << to_string(p.class_label) << ',' << p.position.easting << ',' << p.position.northing << '\n';
}

// ---------------------------------------------------------------------------

struct GridCell {
    int row = 0;
    int col = 0;
    auto operator<=>(const GridCell&) const = default;
};

struct GridSpec {
    double cell_size_m = 20.0;
    int n_rows = 0;
    int n_cols = 0;
    Point2 origin;

    std::size_t cell_count() const noexcept { return static_cast<std::size_t>(n_rows) * n_cols; }

    /// Cell containing `p` under half-open intervals measured from the origin
    /// (east and south are positive), or nullopt outside the grid.
    std::optional<GridCell> cell_of(const Point2& p) const {
        const double dx = (p.easting - origin.easting) / cell_size_m;
        const double dy = (origin.northing - p.northing) / cell_size_m;
        const int col = static_cast<int>(std::floor(dx));
        const int row = static_cast<int>(std::floor(dy));
        if (dx < 0 || dy < 0 || row >= n_rows || col >= n_cols) return std::nullopt;
        return GridCell{row, col};
    }
};

/// Largest grid of whole cells anchored at the mosaic origin; trailing
/// partial cells are dropped.
inline GridSpec grid_for(const RasterMosaic& m, double cell_size_m) {
    if (!(cell_size_m > 0)) throw std::invalid_argument("cell size must be positive");
    GridSpec g;
    g.cell_size_m = cell_size_m;
    g.origin = m.origin;
    g.n_rows = static_cast<int>(std::floor(m.height_m() / cell_size_m + 1e-9));
    g.n_cols = static_cast<int>(std::floor(m.width_m() / cell_size_m + 1e-9));
    return g;
}

/// Pixels per cell side; errors unless cell_size is a whole multiple of the
/// resolution.
inline int tile_side(double cell_size_m, double resolution_m) {
    const double ratio = cell_size_m / resolution_m;
    const double side = std::round(ratio);
    if (side < 1 || std::abs(ratio - side) > 1e-9 * ratio) {
        std::ostringstream os;
        os << "cell size " << cell_size_m << " m is not an integer multiple of resolution " << resolution_m << " m";
        throw std::invalid_argument(os.str());
    }
    return static_cast<int>(side);
}

struct CellTile {
    GridCell cell;
    Tensor<float> tile;  // (bands, side, side)
};

/// Cut `mosaic` into one tile per grid cell in row-major order.
inline std::vector<CellTile> gridify(const RasterMosaic& mosaic, const GridSpec& grid) {
    mosaic.validate();
    const int side = tile_side(grid.cell_size_m, mosaic.resolution_m);
    const double off_x = (grid.origin.easting - mosaic.origin.easting) / mosaic.resolution_m;
    const double off_y = (mosaic.origin.northing - grid.origin.northing) / mosaic.resolution_m;
    const int px0 = static_cast<int>(std::round(off_x));
    const int py0 = static_cast<int>(std::round(off_y));
    if (std::abs(off_x - px0) > 1e-6 || std::abs(off_y - py0) > 1e-6)
        throw std::invalid_argument("grid origin is not aligned to the " + to_string(mosaic.modality) + " pixel lattice");
    if (px0 < 0 || py0 < 0 || px0 + grid.n_cols * side > mosaic.width || py0 + grid.n_rows * side > mosaic.height)
        throw std::invalid_argument("grid extent exceeds the " + to_string(mosaic.modality) + " mosaic");

    std::vector<CellTile> out;
    out.reserve(grid.cell_count());
    for (int r = 0; r < grid.n_rows; ++r) {
        for (int c = 0; c < grid.n_cols; ++c) {
            Tensor<float> tile({mosaic.bands, side, side});
            for (int b = 0; b < mosaic.bands; ++b)
                for (int y = 0; y < side; ++y) {
                    const float* src = &mosaic.pixels[(static_cast<std::size_t>(b) * mosaic.height + py0 + r * side + y) *
                                                          mosaic.width + px0 + c * side];
                    std::copy_n(src, side, tile.data() + (static_cast<std::size_t>(b) * side + y) * side);
                }
            out.push_back({{r, c}, std::move(tile)});
        }
    }
    return out;
}

/// Every cell containing a feature point takes that point's class; all
/// others are empty. Two classes in one cell is an error.
inline std::map<GridCell, ClassLabel> assign_labels(const GridSpec& grid, const std::vector<FeaturePoint>& points) {
    std::map<GridCell, ClassLabel> labels;
    for (int r = 0; r < grid.n_rows; ++r)
        for (int c = 0; c < grid.n_cols; ++c) labels[{r, c}] = ClassLabel::empty;
    std::vector<std::string> conflicts;
    for (const auto& p : points) {
        const auto cell = grid.cell_of(p.position);
        if (!cell) {
            std::ostringstream os;
            os << "feature point (" << p.position.easting << ", " << p.position.northing << ") lies outside the grid";
            throw std::invalid_argument(os.str());
        }
        ClassLabel& slot = labels[*cell];
        if (slot == ClassLabel::empty) {
            slot = p.class_label;
        } else if (slot != p.class_label) {
            conflicts.push_back("(" + std::to_string(cell->row) + "," + std::to_string(cell->col) + "): " +
                                to_string(slot) + " vs " + to_string(p.class_label));
        }
    }
    if (!conflicts.empty()) {
        std::string msg = "cells contain points of different classes:";
        for (const auto& c : conflicts) msg += " " + c;
        throw std::invalid_argument(msg);
    }
    return labels;
}

// ---------------------------------------------------------------------------

/// Keys cubic convolution kernel with parameter `a`.
inline double cubic_kernel(double x, double a) {
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
    return 0.0;
}

/// Upsample each channel of a (C, h, w) tile by an integer factor with
/// separable cubic convolution. Output pixel centers map back to
/// (i + 0.5) / factor - 0.5 in source coordinates; edges replicate.
/// a = -0.5 is the Catmull-Rom / GDAL "cubic" kernel.
inline Tensor<float> resample_bicubic(const Tensor<float>& tile, int factor, double a = -0.5) {
    if (factor < 1) throw std::invalid_argument("resample factor must be >= 1 (downsampling is not supported)");
    if (tile.rank() != 3) throw std::invalid_argument("resample_bicubic expects a (C,h,w) tile");
    if (factor == 1) return tile;
    const int ch = tile.dim(0), h = tile.dim(1), w = tile.dim(2);
    const int oh = h * factor, ow = w * factor;

    struct Taps {
        std::array<int, 4> idx;
        std::array<double, 4> wt;
    };
    auto taps_for = [&](int n_out, int n_in) {
        std::vector<Taps> taps(static_cast<std::size_t>(n_out));
        for (int i = 0; i < n_out; ++i) {
            const double src = (i + 0.5) / factor - 0.5;
            const int base = static_cast<int>(std::floor(src));
            const double t = src - base;
            for (int k = 0; k < 4; ++k) {
                taps[i].idx[k] = std::clamp(base - 1 + k, 0, n_in - 1);
                taps[i].wt[k] = cubic_kernel(t - (k - 1), a);
            }
        }
        return taps;
    };
    const auto tx = taps_for(ow, w);
    const auto ty = taps_for(oh, h);

    Tensor<float> out({ch, oh, ow});
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int c = 0; c < ch; ++c) {
        const float* src = tile.data() + static_cast<std::size_t>(c) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < ow; ++x) {
                double v = 0.0;
                for (int k = 0; k < 4; ++k) v += tx[x].wt[k] * src[y * w + tx[x].idx[k]];
                rows[static_cast<std::size_t>(y) * ow + x] = v;
            }
        float* dst = out.data() + static_cast<std::size_t>(c) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double v = 0.0;
                for (int k = 0; k < 4; ++k) v += ty[y].wt[k] * rows[static_cast<std::size_t>(ty[y].idx[k]) * ow + x];
                dst[static_cast<std::size_t>(y) * ow + x] = static_cast<float>(v);
            }
    }
    return out;
}

// ---------------------------------------------------------------------------

/// One grid cell's co-registered tiles and label.
struct TileSample {
    GridCell cell;
    ClassLabel label = ClassLabel::empty;
    Tensor<float> thermal;  // (1, s_t, s_t)
    Tensor<float> rgb;      // (3, s_r, s_r)
    Tensor<float> lidar;    // (1, s_l, s_l)

    const Tensor<float>& tile(Modality m) const {
        switch (m) {
            case Modality::thermal: return thermal;
            case Modality::rgb: return rgb;
            case Modality::lidar: return lidar;
        }
        throw std::logic_error("bad modality");
    }
    Tensor<float>& tile(Modality m) { return const_cast<Tensor<float>&>(std::as_const(*this).tile(m)); }
};

struct SampleBuildResult {
    std::vector<TileSample> samples;
    std::size_t rejected_cells = 0;
};

/// Gridify all three mosaics over one grid and attach labels. Cells whose
/// tiles do not have the expected side length are rejected.
inline SampleBuildResult build_samples(const RasterMosaic& thermal, const RasterMosaic& rgb, const RasterMosaic& lidar,
                                       const GridSpec& grid, const std::map<GridCell, ClassLabel>& labels) {
    check_alignment({&thermal, &rgb, &lidar});
    const std::array<const RasterMosaic*, 3> mosaics{&thermal, &rgb, &lidar};
    std::array<std::vector<CellTile>, 3> tiles;
    std::array<int, 3> sides{};
    for (int m = 0; m < 3; ++m) {
        tiles[m] = gridify(*mosaics[m], grid);
        sides[m] = tile_side(grid.cell_size_m, mosaics[m]->resolution_m);
    }
    SampleBuildResult out;
    for (std::size_t i = 0; i < tiles[0].size(); ++i) {
        TileSample s;
        s.cell = tiles[0][i].cell;
        bool ok = true;
        for (int m = 0; m < 3; ++m) {
            const auto& t = tiles[m][i].tile;
            if (tiles[m][i].cell != s.cell || t.dim(1) != sides[m] || t.dim(2) != sides[m]) ok = false;
            s.tile(kModalities[m]) = t;
        }
        if (!ok) {
            ++out.rejected_cells;
            continue;
        }
        auto it = labels.find(s.cell);
        s.label = it == labels.end() ? ClassLabel::empty : it->second;
        out.samples.push_back(std::move(s));
    }
    return out;
}

}  // namespace fusionbench
