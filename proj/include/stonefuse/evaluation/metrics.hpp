#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stonefuse/dataset/types.hpp"

namespace stonefuse::evaluation {

using dataset::kClassCount;

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;  // true instances
    std::size_t predicted = 0;
};

using ConfusionMatrix = std::array<std::array<std::size_t, kClassCount>, kClassCount>;  // [true][predicted]

struct MetricsReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::array<ClassMetrics, kClassCount> per_class{};
    ConfusionMatrix confusion{};
    std::size_t total = 0;
    std::vector<std::string> warnings;
};

// Macro averages run over all six classes. A class with no true instances
// (or no predictions) gets 0 for the undefined ratios and a warning. Throws
// ShapeError on length mismatch or empty input, DataError on ids outside 0..5.
MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels);

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // population
};

struct AggregateReport {
    std::size_t runs = 0;
    MetricSummary accuracy;
    MetricSummary precision;
    MetricSummary recall;
    MetricSummary f1;
};

// Throws ConfigError on an empty list.
AggregateReport aggregate_runs(std::span<const MetricsReport> reports);
MetricSummary summarize(std::span<const double> values);

// "0.968 ± 0.007"
std::string format_mean_std(const MetricSummary& s);

// Markdown table: one row per (model name, aggregate), columns accuracy,
// precision, recall, F1.
std::string render_table(const std::vector<std::pair<std::string, AggregateReport>>& rows);

nlohmann::json to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AggregateReport& r);

}  // namespace stonefuse::evaluation
