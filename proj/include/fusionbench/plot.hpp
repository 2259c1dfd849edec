// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fusionbench::plot {

struct Bar {
    double value = 0.0;
    double error = 0.0;  // half-length of the error bar
};

/// Grouped bar chart: one group per metric, one bar per series, y in [0, 1].
struct BarChart {
    std::string title;
    std::vector<std::string> groups;
    std::vector<std::string> series;
    /// bars[group][series]
    std::vector<std::vector<Bar>> bars;
};

inline void render_bar_chart(const BarChart& chart, const std::filesystem::path& path, int width = 720, int height = 480) {
    if (chart.bars.size() != chart.groups.size()) throw std::invalid_argument("bar chart group count mismatch");
    const cv::Scalar white(255, 255, 255), black(0, 0, 0), grey(200, 200, 200);
    // BGR palette.
    const std::vector<cv::Scalar> palette{{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214}, {189, 103, 148}};
    cv::Mat img(height, width, CV_8UC3, white);
    const int left = 60, right = 20, top = 50, bottom = 70;
    const int plot_w = width - left - right, plot_h = height - top - bottom;
    auto y_of = [&](double v) { return top + static_cast<int>(std::lround((1.0 - std::clamp(v, 0.0, 1.0)) * plot_h)); };

    const auto font = cv::FONT_HERSHEY_SIMPLEX;
    cv::putText(img, chart.title, {left, 30}, font, 0.7, black, 2, cv::LINE_AA);
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        const int y = y_of(v);
        cv::line(img, {left, y}, {left + plot_w, y}, grey, 1);
        char label[16];
        std::snprintf(label, sizeof label, "%.1f", v);
        cv::putText(img, label, {15, y + 5}, font, 0.45, black, 1, cv::LINE_AA);
    }
    cv::line(img, {left, top}, {left, top + plot_h}, black, 1);
    cv::line(img, {left, top + plot_h}, {left + plot_w, top + plot_h}, black, 1);

    const int n_groups = static_cast<int>(chart.groups.size());
    const int n_series = std::max<int>(1, static_cast<int>(chart.series.size()));
    const double group_w = static_cast<double>(plot_w) / std::max(1, n_groups);
    const double bar_w = group_w * 0.8 / n_series;
    for (int g = 0; g < n_groups; ++g) {
        const double gx = left + g * group_w + group_w * 0.1;
        for (int s = 0; s < static_cast<int>(chart.bars[g].size()); ++s) {
            const Bar& b = chart.bars[g][s];
            const int x0 = static_cast<int>(gx + s * bar_w), x1 = static_cast<int>(gx + (s + 1) * bar_w) - 2;
            cv::rectangle(img, {x0, y_of(b.value)}, {x1, y_of(0.0)}, palette[s % palette.size()], cv::FILLED);
            const int xc = (x0 + x1) / 2;
            const int ylo = y_of(b.value - b.error), yhi = y_of(b.value + b.error);
            cv::line(img, {xc, ylo}, {xc, yhi}, black, 1, cv::LINE_AA);
            cv::line(img, {xc - 4, ylo}, {xc + 4, ylo}, black, 1, cv::LINE_AA);
            cv::line(img, {xc - 4, yhi}, {xc + 4, yhi}, black, 1, cv::LINE_AA);
        }
        cv::putText(img, chart.groups[g], {static_cast<int>(gx), top + plot_h + 22}, font, 0.5, black, 1, cv::LINE_AA);
    }
    int lx = left;
    for (int s = 0; s < static_cast<int>(chart.series.size()); ++s) {
        cv::rectangle(img, {lx, height - 28}, {lx + 14, height - 14}, palette[s % palette.size()], cv::FILLED);
        cv::putText(img, chart.series[s], {lx + 20, height - 15}, font, 0.5, black, 1, cv::LINE_AA);
        lx += 30 + 10 * static_cast<int>(chart.series[s].size()) + 20;
    }
    if (!cv::imwrite(path.string(), img)) throw std::runtime_error("failed to write plot " + path.string());
}

}  // namespace fusionbench::plot
