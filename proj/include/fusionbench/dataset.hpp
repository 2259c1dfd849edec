// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Spatial splitting, training-set class rebalancing, and band normalization
// of tile samples, plus the on-disk tile archive format.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionbench/ingest.hpp"
#include "fusionbench/types.hpp"

namespace fusionbench {

/// Half-open column interval [begin, end).
struct ColumnRange {
    int begin = 0;
    int end = 0;

    bool contains(int col) const noexcept { return col >= begin && col < end; }
    bool overlaps(const ColumnRange& o) const noexcept {
        return begin < o.end && o.begin < end && begin < end && o.begin < o.end;
    }
};

enum class SplitName { train, val, test };

inline std::string to_string(SplitName s) {
    switch (s) {
        case SplitName::train: return "train";
        case SplitName::val: return "val";
        case SplitName::test: return "test";
    }
    return "?";
}

/// Grid columns counted from the west edge.
struct SplitSpec {
    ColumnRange train{0, 50};
    ColumnRange val{50, 59};
    ColumnRange test{59, 81};

    void validate() const {
        for (const auto* r : {&train, &val, &test})
            if (r->begin < 0 || r->end < r->begin) throw std::invalid_argument("split column range is malformed");
        if (train.overlaps(val) || train.overlaps(test) || val.overlaps(test))
            throw std::invalid_argument("split column ranges overlap");
    }

    /// Contiguous west-to-east layout with the given column counts.
    static SplitSpec contiguous(int train_cols, int val_cols, int test_cols) {
        return {{0, train_cols}, {train_cols, train_cols + val_cols},
                {train_cols + val_cols, train_cols + val_cols + test_cols}};
    }
};

struct SplitSets {
    std::vector<TileSample> train;
    std::vector<TileSample> val;
    std::vector<TileSample> test;
};

inline SplitSets split(std::vector<TileSample> samples, const SplitSpec& spec) {
    spec.validate();
    SplitSets out;
    for (auto& s : samples) {
        const int col = s.cell.col;
        if (spec.train.contains(col)) {
            out.train.push_back(std::move(s));
        } else if (spec.val.contains(col)) {
            out.val.push_back(std::move(s));
        } else if (spec.test.contains(col)) {
            out.test.push_back(std::move(s));
        } else {
            throw std::invalid_argument("grid column " + std::to_string(col) + " is not covered by any split range");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

enum class ResampleKind { identity, undersample, oversample };

struct RebalancePlan {
    int target_per_class = 88;

    static ResampleKind kind_for(std::size_t count, int target) noexcept {
        if (count > static_cast<std::size_t>(target)) return ResampleKind::undersample;
        if (count < static_cast<std::size_t>(target)) return ResampleKind::oversample;
        return ResampleKind::identity;
    }
};

/// Indices into `labels` giving exactly `target_per_class` entries of every
/// class, grouped by class. Larger classes are drawn without replacement;
/// smaller classes keep every original once and fill the remainder by uniform
/// draws with replacement; classes at target are returned as is.
inline std::vector<std::size_t> rebalance_indices(const std::vector<ClassLabel>& labels, const RebalancePlan& plan,
                                                  std::uint64_t seed) {
    if (plan.target_per_class <= 0) throw std::invalid_argument("target_per_class must be positive");
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[index_of(labels[i])].push_back(i);
    for (int c = 0; c < kNumClasses; ++c) {
        if (by_class[c].empty())
            throw std::invalid_argument("training split has no '" + to_string(static_cast<ClassLabel>(c)) +
                                        "' samples; cannot rebalance");
    }
    std::mt19937_64 rng(seed);
    const auto target = static_cast<std::size_t>(plan.target_per_class);
    std::vector<std::size_t> out;
    out.reserve(target * kNumClasses);
    for (auto& members : by_class) {
        switch (RebalancePlan::kind_for(members.size(), plan.target_per_class)) {
            case ResampleKind::identity:
                out.insert(out.end(), members.begin(), members.end());
                break;
            case ResampleKind::undersample:
                for (std::size_t i = 0; i < target; ++i) {
                    std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
                    std::swap(members[i], members[pick(rng)]);
                }
                out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(target));
                break;
            case ResampleKind::oversample: {
                out.insert(out.end(), members.begin(), members.end());
                std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
                for (std::size_t i = members.size(); i < target; ++i) out.push_back(members[pick(rng)]);
                break;
            }
        }
    }
    return out;
}

inline std::vector<ClassLabel> labels_of(const std::vector<TileSample>& samples) {
    std::vector<ClassLabel> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

inline std::vector<TileSample> rebalance(const std::vector<TileSample>& train, const RebalancePlan& plan,
                                         std::uint64_t seed) {
    std::vector<TileSample> out;
    for (std::size_t i : rebalance_indices(labels_of(train), plan, seed)) out.push_back(train[i]);
    return out;
}

// ---------------------------------------------------------------------------

/// Band order: thermal, rgb red, rgb green, rgb blue, lidar.
inline constexpr int kTotalBands = 5;

inline int first_band(Modality m) noexcept {
    switch (m) {
        case Modality::thermal: return 0;
        case Modality::rgb: return 1;
        case Modality::lidar: return 4;
    }
    return 0;
}

inline const std::array<std::string, kTotalBands>& band_names() {
    static const std::array<std::string, kTotalBands> names{"thermal", "rgb_r", "rgb_g", "rgb_b", "lidar"};
    return names;
}

struct BandStats {
    std::array<double, kTotalBands> mean{};
    std::array<double, kTotalBands> std{};
};

inline BandStats fit_stats(const std::vector<TileSample>& train) {
    if (train.empty()) throw std::invalid_argument("cannot fit band statistics on an empty training set");
    std::array<double, kTotalBands> sum{}, count{};
    auto for_each_band = [&](auto&& fn) {
        for (const auto& s : train)
            for (Modality m : kModalities) {
                const auto& t = s.tile(m);
                const std::size_t plane = t.size() / static_cast<std::size_t>(t.dim(0));
                for (int b = 0; b < t.dim(0); ++b) fn(first_band(m) + b, t.data() + b * plane, plane);
            }
    };
    for_each_band([&](int band, const float* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) sum[band] += p[i];
        count[band] += static_cast<double>(n);
    });
    BandStats stats;
    for (int b = 0; b < kTotalBands; ++b) stats.mean[b] = sum[b] / count[b];
    std::array<double, kTotalBands> sq{};
    for_each_band([&](int band, const float* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) sq[band] += (p[i] - stats.mean[band]) * (p[i] - stats.mean[band]);
    });
    for (int b = 0; b < kTotalBands; ++b) {
        stats.std[b] = std::sqrt(sq[b] / count[b]);
        if (!(stats.std[b] > 0.0))
            throw std::invalid_argument("band '" + band_names()[b] + "' has zero variance in the training split");
    }
    return stats;
}

namespace detail {
inline void map_bands(TileSample& s, const BandStats& stats, bool inverse) {
    for (Modality m : kModalities) {
        auto& t = s.tile(m);
        if (t.rank() != 3 || t.dim(0) != band_count(m))
            throw std::invalid_argument(to_string(m) + " tile has " + std::to_string(t.rank() == 3 ? t.dim(0) : -1) +
                                        " bands, expected " + std::to_string(band_count(m)));
        const std::size_t plane = t.size() / static_cast<std::size_t>(t.dim(0));
        for (int b = 0; b < t.dim(0); ++b) {
            const double mu = stats.mean[first_band(m) + b], sd = stats.std[first_band(m) + b];
            float* p = t.data() + b * plane;
            for (std::size_t i = 0; i < plane; ++i)
                p[i] = static_cast<float>(inverse ? p[i] * sd + mu : (p[i] - mu) / sd);
        }
    }
}
}  // namespace detail

inline TileSample normalize(TileSample s, const BandStats& stats) {
    detail::map_bands(s, stats, false);
    return s;
}

inline TileSample denormalize(TileSample s, const BandStats& stats) {
    detail::map_bands(s, stats, true);
    return s;
}

inline nlohmann::json to_json(const BandStats& s) {
    nlohmann::json bands = nlohmann::json::array();
    for (int b = 0; b < kTotalBands; ++b) bands.push_back({{"band", band_names()[b]}, {"mean", s.mean[b]}, {"std", s.std[b]}});
    return {{"bands", bands}};
}

inline BandStats band_stats_from_json(const nlohmann::json& j) {
    BandStats s;
    const auto& bands = j.at("bands");
    if (bands.size() != kTotalBands) throw std::runtime_error("band stats must list 5 bands");
    for (int b = 0; b < kTotalBands; ++b) {
        if (bands[b].at("band").get<std::string>() != band_names()[b])
            throw std::runtime_error("band stats out of order at '" + bands[b].at("band").get<std::string>() + "'");
        s.mean[b] = bands[b].at("mean").get<double>();
        s.std[b] = bands[b].at("std").get<double>();
        if (!(s.std[b] > 0)) throw std::runtime_error("band stats std must be positive");
    }
    return s;
}

inline void save_band_stats(const std::filesystem::path& path, const BandStats& s) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(s).dump(2) << '\n';
}

inline BandStats load_band_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read band stats " + path.string());
    return band_stats_from_json(nlohmann::json::parse(in));
}

// ---------------------------------------------------------------------------
// Tile archive: <dir>/tiles.bin (raw float32 tiles, thermal|rgb|lidar per
// sample) and <dir>/manifest.jsonl (one record per sample).

inline void write_tile_archive(const std::filesystem::path& dir, SplitName split, const std::vector<TileSample>& samples) {
    std::filesystem::create_directories(dir);
    std::ofstream bin(dir / "tiles.bin", std::ios::binary | std::ios::trunc);
    std::ofstream man(dir / "manifest.jsonl", std::ios::trunc);
    if (!bin || !man) throw std::runtime_error("cannot write tile archive in " + dir.string());
    std::uint64_t offset = 0;
    for (const auto& s : samples) {
        nlohmann::json shapes;
        for (Modality m : kModalities) {
            const auto& t = s.tile(m);
            shapes[to_string(m)] = t.shape();
            bin.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        }
        man << nlohmann::json{{"row", s.cell.row}, {"col", s.cell.col}, {"label", to_string(s.label)},
                              {"split", to_string(split)}, {"shapes", shapes}, {"offset", offset}}
                   .dump()
            << '\n';
        for (Modality m : kModalities) offset += s.tile(m).size() * sizeof(float);
    }
    if (!bin || !man) throw std::runtime_error("short write in tile archive " + dir.string());
}

inline std::vector<TileSample> read_tile_archive(const std::filesystem::path& dir) {
    std::ifstream bin(dir / "tiles.bin", std::ios::binary);
    std::ifstream man(dir / "manifest.jsonl");
    if (!bin || !man) throw std::runtime_error("missing tile archive in " + dir.string());
    std::vector<TileSample> out;
    std::string line;
    while (std::getline(man, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        TileSample s;
        s.cell = {rec.at("row").get<int>(), rec.at("col").get<int>()};
        s.label = parse_class(rec.at("label").get<std::string>());
        bin.seekg(static_cast<std::streamoff>(rec.at("offset").get<std::uint64_t>()));
        for (Modality m : kModalities) {
            Tensor<float> t(rec.at("shapes").at(to_string(m)).get<std::vector<int>>());
            bin.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
            s.tile(m) = std::move(t);
        }
        if (!bin) throw std::runtime_error("truncated tiles.bin in " + dir.string());
        out.push_back(std::move(s));
    }
    return out;
}

/// One `{row, col, split, label}` record per sample.
inline void write_split_manifest(const std::filesystem::path& path, const SplitSets& sets) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    auto emit = [&](SplitName name, const std::vector<TileSample>& v) {
        for (const auto& s : v)
            out << nlohmann::json{{"row", s.cell.row}, {"col", s.cell.col}, {"split", to_string(name)},
                                  {"label", to_string(s.label)}}
                       .dump()
                << '\n';
    };
    emit(SplitName::train, sets.train);
    emit(SplitName::val, sets.val);
    emit(SplitName::test, sets.test);
}

inline std::array<std::size_t, kNumClasses> class_counts(const std::vector<TileSample>& samples) {
    std::array<std::size_t, kNumClasses> counts{};
    for (const auto& s : samples) ++counts[index_of(s.label)];
    return counts;
}

}  // namespace fusionbench
