// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include <unistd.h>

#include <gtest/gtest.h>

#include "fusionbench/dataset.hpp"

using namespace fusionbench;
namespace fs = std::filesystem;

namespace {

TileSample sample_at(int row, int col, ClassLabel label, float fill = 0.0f) {
    TileSample s;
    s.cell = {row, col};
    s.label = label;
    s.thermal = Tensor<float>({1, 2, 2}, fill);
    s.rgb = Tensor<float>({3, 4, 4}, fill);
    s.lidar = Tensor<float>({1, 3, 3}, fill);
    return s;
}

TileSample random_sample(std::mt19937_64& rng, int row, int col, ClassLabel label) {
    TileSample s = sample_at(row, col, label);
    std::normal_distribution<float> t(30.0f, 2.0f), c(0.4f, 0.1f), l(100.0f, 5.0f);
    for (auto& v : s.thermal.values()) v = t(rng);
    for (auto& v : s.rgb.values()) v = c(rng);
    for (auto& v : s.lidar.values()) v = l(rng);
    return s;
}

std::vector<ClassLabel> labels_with_counts(const std::array<int, kNumClasses>& counts, std::mt19937_64& rng) {
    std::vector<ClassLabel> out;
    for (int c = 0; c < kNumClasses; ++c) out.insert(out.end(), counts[c], static_cast<ClassLabel>(c));
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

/// Plain two-pass statistics over one band of a set of samples.
std::pair<double, double> band_moments(const std::vector<TileSample>& set, Modality m, int band) {
    double sum = 0, n = 0;
    for (const auto& s : set) {
        const auto& t = s.tile(m);
        const std::size_t plane = t.size() / t.dim(0);
        for (std::size_t i = 0; i < plane; ++i) sum += t[band * plane + i], n += 1;
    }
    const double mean = sum / n;
    double sq = 0;
    for (const auto& s : set) {
        const auto& t = s.tile(m);
        const std::size_t plane = t.size() / t.dim(0);
        for (std::size_t i = 0; i < plane; ++i) sq += (t[band * plane + i] - mean) * (t[band * plane + i] - mean);
    }
    return {mean, std::sqrt(sq / n)};
}

}  // namespace

TEST(Split, ColumnBoundaries) {
    const SplitSpec spec;
    std::vector<TileSample> samples{sample_at(0, 49, ClassLabel::empty), sample_at(3, 50, ClassLabel::midden),
                                    sample_at(1, 58, ClassLabel::empty), sample_at(2, 59, ClassLabel::water),
                                    sample_at(0, 80, ClassLabel::empty)};
    const auto sets = split(samples, spec);
    ASSERT_EQ(sets.train.size(), 1u);
    EXPECT_EQ(sets.train[0].cell.col, 49);
    ASSERT_EQ(sets.val.size(), 2u);
    EXPECT_EQ(sets.val[0].cell.col, 50);
    ASSERT_EQ(sets.test.size(), 2u);
    EXPECT_EQ(sets.test[0].cell.col, 59);
    EXPECT_THROW(split({sample_at(0, 81, ClassLabel::empty)}, spec), std::invalid_argument);
}

TEST(Split, EmptyInputAndSingleColumnRanges) {
    const auto none = split({}, SplitSpec{});
    EXPECT_TRUE(none.train.empty() && none.val.empty() && none.test.empty());
    const auto one = split({sample_at(0, 0, ClassLabel::empty), sample_at(1, 1, ClassLabel::empty),
                            sample_at(2, 2, ClassLabel::empty)},
                           SplitSpec::contiguous(1, 1, 1));
    EXPECT_EQ(one.train.size(), 1u);
    EXPECT_EQ(one.val.size(), 1u);
    EXPECT_EQ(one.test.size(), 1u);
    EXPECT_THROW((SplitSpec{{0, 10}, {9, 12}, {12, 20}}.validate()), std::invalid_argument);
    EXPECT_THROW((SplitSpec{{0, 10}, {12, 11}, {12, 20}}.validate()), std::invalid_argument);
}

TEST(Split, IsAPartitionByColumn) {
    std::mt19937_64 rng(4);
    std::vector<TileSample> samples;
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 20; ++c) samples.push_back(sample_at(r, c, static_cast<ClassLabel>(rng() % 4)));
    const auto spec = SplitSpec::contiguous(11, 4, 5);
    const auto sets = split(samples, spec);
    EXPECT_EQ(sets.train.size() + sets.val.size() + sets.test.size(), samples.size());
    std::set<std::pair<int, int>> seen;
    for (const auto* v : {&sets.train, &sets.val, &sets.test})
        for (const auto& s : *v) EXPECT_TRUE(seen.insert({s.cell.row, s.cell.col}).second);
    for (const auto& s : sets.train) EXPECT_LT(s.cell.col, 11);
    for (const auto& s : sets.val) EXPECT_TRUE(s.cell.col >= 11 && s.cell.col < 15);
    for (const auto& s : sets.test) EXPECT_GE(s.cell.col, 15);
}

TEST(Rebalance, ExactTargetsForSkewedCounts) {
    std::mt19937_64 rng(8);
    const auto labels = labels_with_counts({3000, 20, 88, 30}, rng);
    const auto idx = rebalance_indices(labels, RebalancePlan{}, 42);
    ASSERT_EQ(idx.size(), 4u * 88);
    std::array<std::map<std::size_t, int>, kNumClasses> uses;
    for (std::size_t i : idx) ++uses[index_of(labels[i])][i];
    for (int c = 0; c < kNumClasses; ++c) {
        int total = 0;
        for (const auto& [i, n] : uses[c]) total += n;
        EXPECT_EQ(total, 88) << c;
    }
    for (const auto& [i, n] : uses[0]) EXPECT_EQ(n, 1);   // undersampled: no duplicates
    EXPECT_EQ(uses[1].size(), 20u);                        // oversampled: every original present
    EXPECT_EQ(uses[3].size(), 30u);
    EXPECT_EQ(uses[2].size(), 88u);
    for (const auto& [i, n] : uses[2]) EXPECT_EQ(n, 1);
}

TEST(Rebalance, DeterministicPerSeedAndVariesAcrossSeeds) {
    std::mt19937_64 rng(9);
    const auto labels = labels_with_counts({500, 40, 60, 100}, rng);
    EXPECT_EQ(rebalance_indices(labels, {}, 7), rebalance_indices(labels, {}, 7));
    EXPECT_NE(rebalance_indices(labels, {}, 7), rebalance_indices(labels, {}, 8));
}

TEST(Rebalance, MissingClassIsAnError) {
    const std::vector<ClassLabel> labels{ClassLabel::empty, ClassLabel::midden, ClassLabel::mound};
    try {
        rebalance_indices(labels, {}, 0);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("water"), std::string::npos);
    }
    EXPECT_THROW(rebalance_indices(labels, RebalancePlan{0}, 0), std::invalid_argument);
}

TEST(Rebalance, RandomCountsProperty) {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> count(1, 400);
    for (int trial = 0; trial < 50; ++trial) {
        const std::array<int, kNumClasses> counts{count(rng), count(rng), count(rng), count(rng)};
        const auto labels = labels_with_counts(counts, rng);
        const auto idx = rebalance_indices(labels, {}, rng());
        std::array<std::multiset<std::size_t>, kNumClasses> got;
        for (std::size_t i : idx) got[index_of(labels[i])].insert(i);
        for (int c = 0; c < kNumClasses; ++c) {
            ASSERT_EQ(got[c].size(), 88u);
            const std::set<std::size_t> distinct(got[c].begin(), got[c].end());
            if (counts[c] >= 88) {
                EXPECT_EQ(distinct.size(), 88u);
            } else {
                EXPECT_EQ(distinct.size(), static_cast<std::size_t>(counts[c]));
            }
        }
    }
}

TEST(BandStatistics, WorkedExampleAndConstantBand) {
    auto a = sample_at(0, 0, ClassLabel::empty, 0.0f), b = sample_at(0, 1, ClassLabel::empty, 2.0f);
    const auto stats = fit_stats({a, b});
    for (int band = 0; band < kTotalBands; ++band) {
        EXPECT_DOUBLE_EQ(stats.mean[band], 1.0);
        EXPECT_DOUBLE_EQ(stats.std[band], 1.0);
    }
    auto mixed = sample_at(0, 0, ClassLabel::empty, 2.0f);
    mixed.thermal[0] = 4.0f;
    const auto n = normalize(mixed, stats);
    EXPECT_FLOAT_EQ(n.thermal[0], 3.0f);
    EXPECT_FLOAT_EQ(n.thermal[1], 1.0f);

    auto c = sample_at(0, 0, ClassLabel::empty, 5.0f);
    auto d = sample_at(0, 1, ClassLabel::empty, 5.0f);
    d.thermal.fill(1.0f);
    d.rgb.fill(1.0f);
    try {
        fit_stats({c, d});
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("lidar"), std::string::npos);
    }
    EXPECT_THROW(fit_stats({}), std::invalid_argument);
}

TEST(BandStatistics, NormalizedTrainingBandsAreStandardAndInvertible) {
    std::mt19937_64 rng(12);
    std::vector<TileSample> train;
    for (int i = 0; i < 40; ++i) train.push_back(random_sample(rng, i / 8, i % 8, ClassLabel::empty));
    const auto stats = fit_stats(train);
    std::vector<TileSample> normed;
    for (const auto& s : train) normed.push_back(normalize(s, stats));
    for (Modality m : kModalities)
        for (int b = 0; b < band_count(m); ++b) {
            const auto [mean, sd] = band_moments(normed, m, b);
            EXPECT_LT(std::abs(mean), 1e-6) << to_string(m) << b;
            EXPECT_LT(std::abs(sd - 1.0), 1e-4) << to_string(m) << b;
        }
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto back = denormalize(normed[i], stats);
        for (Modality m : kModalities)
            for (std::size_t k = 0; k < back.tile(m).size(); ++k)
                ASSERT_NEAR(back.tile(m)[k], train[i].tile(m)[k], 1e-5 * std::max(1.0f, std::abs(train[i].tile(m)[k])));
    }
    const auto json_path = fs::temp_directory_path() / ("fusionbench_stats_" + std::to_string(::getpid()) + ".json");
    save_band_stats(json_path, stats);
    const auto loaded = load_band_stats(json_path);
    EXPECT_EQ(loaded.mean, stats.mean);
    EXPECT_EQ(loaded.std, stats.std);
    fs::remove(json_path);
}

TEST(TileArchive, RoundTripPreservesCellsLabelsAndPixels) {
    std::mt19937_64 rng(13);
    std::vector<TileSample> samples;
    for (int i = 0; i < 6; ++i) samples.push_back(random_sample(rng, i, 2 * i, static_cast<ClassLabel>(i % 4)));
    const auto dir = fs::temp_directory_path() / ("fusionbench_archive_" + std::to_string(::getpid()));
    write_tile_archive(dir, SplitName::val, samples);
    const auto back = read_tile_archive(dir);
    ASSERT_EQ(back.size(), samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        EXPECT_EQ(back[i].cell, samples[i].cell);
        EXPECT_EQ(back[i].label, samples[i].label);
        for (Modality m : kModalities) {
            EXPECT_EQ(back[i].tile(m).shape(), samples[i].tile(m).shape());
            EXPECT_EQ(back[i].tile(m).storage(), samples[i].tile(m).storage());
        }
    }
    EXPECT_EQ(class_counts(back), (std::array<std::size_t, kNumClasses>{2, 2, 1, 1}));
    fs::remove_all(dir);
    EXPECT_THROW(read_tile_archive(dir), std::runtime_error);
}
