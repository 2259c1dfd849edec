// Copyright (c) 2026 The fusionbench Authors
// SPDX-License-Identifier: Apache-2.0

// Test-set evaluation of completed trials, the MoE gating-weight table, and
// report emission (metrics records, summary, plots).

#pragma once

#include <array>
#include <cmath>
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

#include "fusionbench/dataset.hpp"
#include "fusionbench/metrics.hpp"
#include "fusionbench/plot.hpp"
#include "fusionbench/training.hpp"

namespace fusionbench {

struct TrialMetrics {
    int trial = 0;
    double macro_auc = 0.0;
    std::array<std::optional<double>, kNumClasses> class_auc{};
    std::array<PrecisionRecall, kNumClasses> per_class{};
    double macro_precision = 0.0;
    double macro_recall = 0.0;
};

inline TrialMetrics compute_trial_metrics(int trial, const Tensor<double>& probabilities, std::span<const int> labels) {
    TrialMetrics m;
    m.trial = trial;
    const auto auc = auc_macro_detail(probabilities, labels);
    m.macro_auc = auc.macro;
    for (int c = 0; c < kNumClasses; ++c) m.class_auc[c] = auc.per_class[c];
    const auto pred = argmax_rows(probabilities);
    for (int c = 0; c < kNumClasses; ++c) {
        m.per_class[c] = precision_recall(pred, labels, c);
        m.macro_precision += m.per_class[c].precision / kNumClasses;
        m.macro_recall += m.per_class[c].recall / kNumClasses;
    }
    return m;
}

/// One test image's gating vector, tagged with its class.
struct GateRecord {
    int trial = 0;
    ClassLabel label = ClassLabel::empty;
    std::array<double, 3> weights{};
};

/// Modality x feature-class table of mean +- 2 SE gating weights.
struct GatingReport {
    /// cells[modality][feature class index into kFeatureClasses]
    std::array<std::array<MeanSe, 3>, 3> cells{};
    std::array<std::size_t, 3> samples{};
    std::size_t trials = 0;
};

inline constexpr double kGateSumTolerance = 1e-6;

/// Pool (image, trial) gating vectors per feature class. A class with a
/// single vector reports SE 0 and n = 1.
inline GatingReport gating_report_from_records(const std::vector<GateRecord>& records) {
    GatingReport report;
    std::array<std::array<std::vector<double>, 3>, 3> pooled;
    std::map<int, bool> trials;
    for (const auto& r : records) {
        const double sum = r.weights[0] + r.weights[1] + r.weights[2];
        if (std::abs(sum - 1.0) > kGateSumTolerance)
            throw std::logic_error("gating vector does not sum to 1 (sum " + std::to_string(sum) + ")");
        trials[r.trial] = true;
        if (r.label == ClassLabel::empty) continue;
        const int f = index_of(r.label) - 1;
        for (int m = 0; m < 3; ++m) pooled[m][f].push_back(r.weights[m]);
    }
    report.trials = trials.size();
    for (int f = 0; f < 3; ++f) {
        report.samples[f] = pooled[0][f].size();
        if (pooled[0][f].empty()) continue;
        for (int m = 0; m < 3; ++m) report.cells[m][f] = aggregate_lenient(pooled[m][f]);
    }
    return report;
}

struct StrategyEvaluation {
    std::vector<TrialMetrics> trials;
    std::vector<GateRecord> gates;  // MoE only
};

/// Re-run each trial's best checkpoint on the (unnormalized) test split.
inline StrategyEvaluation evaluate_trials(Strategy strategy, const std::vector<TrialResult>& trials,
                                          const std::vector<TileSample>& test_raw, int batch_size = 64) {
    StrategyEvaluation out;
    for (const auto& t : trials) {
        const Checkpoint ckpt = load_checkpoint(t.checkpoint);
        if (ckpt.spec.strategy != strategy)
            throw std::invalid_argument(t.checkpoint.string() + " holds a " + to_string(ckpt.spec.strategy) +
                                        " model, expected " + to_string(strategy));
        auto model = model_from_checkpoint<float>(ckpt);
        std::vector<TileSample> normalized;
        normalized.reserve(test_raw.size());
        for (const auto& s : test_raw) normalized.push_back(normalize(s, ckpt.stats));
        const ModelDataset test = make_model_dataset(std::move(normalized), strategy);
        const auto labels = test.labels();
        const Predictions p = predict(model, test, batch_size);
        out.trials.push_back(compute_trial_metrics(t.trial_index, p.probabilities, labels));
        if (strategy == Strategy::moe) {
            for (std::size_t i = 0; i < test.size(); ++i) {
                const int r = static_cast<int>(i);
                out.gates.push_back({t.trial_index, test.samples[i].label, {p.gates.at(r, 0), p.gates.at(r, 1), p.gates.at(r, 2)}});
            }
        }
    }
    return out;
}

/// Gating table for MoE checkpoints; any other strategy is rejected.
inline GatingReport gating_table(const std::vector<std::filesystem::path>& checkpoints,
                                 const std::vector<TileSample>& test_raw) {
    std::vector<TrialResult> trials;
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        if (load_checkpoint(checkpoints[i]).spec.strategy != Strategy::moe)
            throw std::invalid_argument(checkpoints[i].string() + " is not a mixture-of-experts checkpoint");
        TrialResult t;
        t.trial_index = static_cast<int>(i);
        t.checkpoint = checkpoints[i];
        trials.push_back(t);
    }
    return gating_report_from_records(evaluate_trials(Strategy::moe, trials, test_raw).gates);
}

inline std::string format_mean_se(const MeanSe& v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f \xC2\xB1 %.2f", v.mean, v.two_se);
    return buf;
}

/// Plain-text table: modality rows, feature-class columns.
inline std::string render_gating_table(const GatingReport& g) {
    static const std::array<const char*, 3> rows{"Thermal", "RGB", "LiDAR"};
    static const std::array<const char*, 3> cols{"Rhino midden", "Termite mound", "Water"};
    std::ostringstream os;
    os << "Mixture of Experts gating weights: mean \xC2\xB1 2 SE over test images of each class, pooled over "
       << g.trials << " trial(s); SE uses the pooled (image, trial) count\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-10s%-17s%-17s%-17s\n", "", cols[0], cols[1], cols[2]);
    os << buf;
    for (int m = 0; m < 3; ++m) {
        std::snprintf(buf, sizeof buf, "%-10s", rows[m]);
        os << buf;
        for (int f = 0; f < 3; ++f) {
            const std::string cell = g.samples[f] ? format_mean_se(g.cells[m][f]) : "n/a";
            // the \xC2\xB1 sign is two bytes but one column wide
            std::snprintf(buf, sizeof buf, "%-*s", g.samples[f] ? 18 : 17, cell.c_str());
            os << buf;
        }
        os << '\n';
    }
    std::snprintf(buf, sizeof buf, "%-10s%-17zu%-17zu%-17zu\n", "n", g.samples[0], g.samples[1], g.samples[2]);
    os << buf;
    return os.str();
}

inline nlohmann::json to_json(const GatingReport& g) {
    nlohmann::json out = {{"trials", g.trials}, {"rows", {"thermal", "rgb", "lidar"}}, {"columns", {"midden", "mound", "water"}}};
    nlohmann::json cells = nlohmann::json::array();
    for (int m = 0; m < 3; ++m) {
        nlohmann::json row = nlohmann::json::array();
        for (int f = 0; f < 3; ++f)
            row.push_back({{"mean", g.cells[m][f].mean}, {"two_se", g.cells[m][f].two_se}, {"n", g.samples[f]}});
        cells.push_back(row);
    }
    out["cells"] = cells;
    return out;
}

// ---------------------------------------------------------------------------

struct ReportFiles {
    std::filesystem::path metrics;
    std::filesystem::path summary;
    std::vector<std::filesystem::path> plots;
    std::optional<std::filesystem::path> gating_table;
};

inline const std::array<std::string, 5>& plot_panels() {
    static const std::array<std::string, 5> names{"overall", "empty", "midden", "mound", "water"};
    return names;
}

namespace detail {

using MetricSeries = std::map<std::string, std::vector<double>>;

inline MetricSeries collect_series(const std::vector<TrialMetrics>& trials) {
    MetricSeries s;
    for (const auto& t : trials) {
        s["auc/macro"].push_back(t.macro_auc);
        s["precision/macro"].push_back(t.macro_precision);
        s["recall/macro"].push_back(t.macro_recall);
        for (int c = 0; c < kNumClasses; ++c) {
            const std::string cls = to_string(static_cast<ClassLabel>(c));
            s["precision/" + cls].push_back(t.per_class[c].precision);
            s["recall/" + cls].push_back(t.per_class[c].recall);
            if (t.class_auc[c]) s["auc/" + cls].push_back(*t.class_auc[c]);
        }
    }
    return s;
}

}  // namespace detail

/// Write metrics.jsonl, summary.{txt,json}, five bar plots (macro panel and
/// one per class) and, when MoE was evaluated, the gating table. Nothing is
/// written if no strategy has completed trials.
inline ReportFiles emit_report(const std::map<Strategy, StrategyEvaluation>& results, const std::filesystem::path& out_dir) {
    std::vector<Strategy> strategies;
    for (const auto& [s, ev] : results)
        if (!ev.trials.empty()) strategies.push_back(s);
    if (strategies.empty()) throw std::invalid_argument("no completed trials to report");

    const auto staging = out_dir / ".report.partial";
    std::filesystem::remove_all(staging);
    std::filesystem::create_directories(staging);

    std::map<Strategy, std::map<std::string, MeanSe>> agg;
    {
        std::ofstream metrics(staging / "metrics.jsonl");
        for (Strategy s : strategies) {
            for (const auto& t : results.at(s).trials) {
                auto rec = [&](const std::string& metric, const std::string& cls, double v) {
                    metrics << nlohmann::json{{"strategy", to_string(s)}, {"trial", t.trial}, {"metric", metric}, {"class", cls}, {"value", v}}.dump() << '\n';
                };
                rec("auc", "macro", t.macro_auc);
                rec("precision", "macro", t.macro_precision);
                rec("recall", "macro", t.macro_recall);
                for (int c = 0; c < kNumClasses; ++c) {
                    const std::string cls = to_string(static_cast<ClassLabel>(c));
                    rec("precision", cls, t.per_class[c].precision);
                    rec("recall", cls, t.per_class[c].recall);
                    if (t.class_auc[c]) rec("auc", cls, *t.class_auc[c]);
                }
            }
            for (const auto& [key, values] : detail::collect_series(results.at(s).trials)) agg[s][key] = aggregate_lenient(values);
        }
    }

    {
        std::ofstream txt(staging / "summary.txt");
        nlohmann::json js = {{"auc_definition", kAucDefinition}, {"interval", "mean +- 2 * sample_std / sqrt(n_trials)"}};
        txt << "# " << kAucDefinition << "\n# values: mean \xC2\xB1 2 SE over trials (SE = sample std / sqrt(n))\n";
        for (Strategy s : strategies) {
            txt << "\n[" << to_string(s) << "] trials: " << results.at(s).trials.size() << '\n';
            for (const auto& [key, v] : agg[s]) {
                char buf[128];
                std::snprintf(buf, sizeof buf, "  %-18s %.4f \xC2\xB1 %.4f\n", key.c_str(), v.mean, v.two_se);
                txt << buf;
                js["strategies"][to_string(s)][key] = {{"mean", v.mean}, {"two_se", v.two_se}, {"n", v.n}};
            }
        }
        std::ofstream(staging / "summary.json") << js.dump(2) << '\n';
    }

    ReportFiles files;
    std::vector<std::string> series;
    for (Strategy s : strategies) series.push_back(to_string(s));
    auto bars_for = [&](const std::vector<std::string>& keys) {
        std::vector<std::vector<plot::Bar>> bars;
        for (const auto& key : keys) {
            std::vector<plot::Bar> group;
            for (Strategy s : strategies) {
                auto it = agg[s].find(key);
                group.push_back(it == agg[s].end() ? plot::Bar{} : plot::Bar{it->second.mean, it->second.two_se});
            }
            bars.push_back(group);
        }
        return bars;
    };
    for (const auto& panel : plot_panels()) {
        plot::BarChart chart;
        chart.series = series;
        if (panel == "overall") {
            chart.title = "Macro-averaged (mean +/- 2 SE)";
            chart.groups = {"precision", "recall", "AUC"};
            chart.bars = bars_for({"precision/macro", "recall/macro", "auc/macro"});
        } else {
            chart.title = "Class: " + panel + " (mean +/- 2 SE)";
            chart.groups = {"precision", "recall"};
            chart.bars = bars_for({"precision/" + panel, "recall/" + panel});
        }
        plot::render_bar_chart(chart, staging / (panel + ".png"));
    }

    std::optional<GatingReport> gating;
    if (auto it = results.find(Strategy::moe); it != results.end() && !it->second.trials.empty()) {
        gating = gating_report_from_records(it->second.gates);
        std::ofstream(staging / "gating_table.txt") << render_gating_table(*gating);
        std::ofstream(staging / "gating_table.json") << to_json(*gating).dump(2) << '\n';
    }

    std::filesystem::create_directories(out_dir);
    if (!gating)
        for (const char* stale : {"gating_table.txt", "gating_table.json"}) std::filesystem::remove(out_dir / stale);
    for (const auto& entry : std::filesystem::directory_iterator(staging)) {
        const auto dest = out_dir / entry.path().filename();
        std::filesystem::rename(entry.path(), dest);
    }
    std::filesystem::remove_all(staging);
    files.metrics = out_dir / "metrics.jsonl";
    files.summary = out_dir / "summary.txt";
    for (const auto& panel : plot_panels()) files.plots.push_back(out_dir / (panel + ".png"));
    if (gating) files.gating_table = out_dir / "gating_table.txt";
    return files;
}

}  // namespace fusionbench
