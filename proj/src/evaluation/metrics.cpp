#include "stonefuse/evaluation/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "stonefuse/core/errors.hpp"

namespace stonefuse::evaluation {

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace

MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw ShapeError("compute_metrics: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw ShapeError("compute_metrics: empty input");
    MetricsReport r;
    r.total = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int t = labels[i], p = predictions[i];
        if (t < 0 || t >= static_cast<int>(kClassCount) || p < 0 || p >= static_cast<int>(kClassCount)) {
            throw DataError("compute_metrics: class id out of range at index " + std::to_string(i));
        }
        ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    std::size_t correct = 0;
    for (std::size_t c = 0; c < kClassCount; ++c) {
        auto& m = r.per_class[c];
        const std::size_t tp = r.confusion[c][c];
        correct += tp;
        for (std::size_t k = 0; k < kClassCount; ++k) {
            m.support += r.confusion[c][k];
            m.predicted += r.confusion[k][c];
        }
        const std::string name(dataset::to_string(static_cast<dataset::StoneClass>(c)));
        if (m.support == 0) r.warnings.push_back("class " + name + " has no test samples; recall and F1 set to 0");
        if (m.predicted == 0) r.warnings.push_back("class " + name + " was never predicted; precision set to 0");
        m.precision = ratio(tp, m.predicted);
        m.recall = ratio(tp, m.support);
        m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        r.macro_precision += m.precision;
        r.macro_recall += m.recall;
        r.macro_f1 += m.f1;
    }
    r.macro_precision /= kClassCount;
    r.macro_recall /= kClassCount;
    r.macro_f1 /= kClassCount;
    r.accuracy = ratio(correct, r.total);
    return r;
}

MetricSummary summarize(std::span<const double> values) {
    if (values.empty()) throw ConfigError("cannot summarize an empty list");
    MetricSummary s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size()));
    return s;
}

AggregateReport aggregate_runs(std::span<const MetricsReport> reports) {
    if (reports.empty()) throw ConfigError("aggregate_runs: no reports");
    auto column = [&](double MetricsReport::*field) {
        std::vector<double> v;
        for (const auto& r : reports) v.push_back(r.*field);
        return summarize(v);
    };
    AggregateReport a;
    a.runs = reports.size();
    a.accuracy = column(&MetricsReport::accuracy);
    a.precision = column(&MetricsReport::macro_precision);
    a.recall = column(&MetricsReport::macro_recall);
    a.f1 = column(&MetricsReport::macro_f1);
    return a;
}

std::string format_mean_std(const MetricSummary& s) { return fixed3(s.mean) + " ± " + fixed3(s.std); }

std::string render_table(const std::vector<std::pair<std::string, AggregateReport>>& rows) {
    std::string out = "| Model | Accuracy | Precision | Recall | F1-score |\n|---|---|---|---|---|\n";
    for (const auto& [name, a] : rows) {
        out += "| " + name + " | " + format_mean_std(a.accuracy) + " | " + format_mean_std(a.precision) + " | " +
               format_mean_std(a.recall) + " | " + format_mean_std(a.f1) + " |\n";
    }
    return out;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < kClassCount; ++c) {
        const auto& m = r.per_class[c];
        per_class[std::string(dataset::to_string(static_cast<dataset::StoneClass>(c)))] = {
            {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support},
            {"predicted", m.predicted}};
    }
    return {{"accuracy", r.accuracy},
            {"macro_precision", r.macro_precision},
            {"macro_recall", r.macro_recall},
            {"macro_f1", r.macro_f1},
            {"total", r.total},
            {"classes", {"WW", "WD", "AU", "STR", "BRU", "CYS"}},
            {"per_class", per_class},
            {"confusion_matrix", r.confusion},
            {"warnings", r.warnings}};
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
    try {
        MetricsReport r;
        r.accuracy = j.at("accuracy").get<double>();
        r.macro_precision = j.at("macro_precision").get<double>();
        r.macro_recall = j.at("macro_recall").get<double>();
        r.macro_f1 = j.at("macro_f1").get<double>();
        r.total = j.at("total").get<std::size_t>();
        r.confusion = j.at("confusion_matrix").get<ConfusionMatrix>();
        for (std::size_t c = 0; c < kClassCount; ++c) {
            const auto& m = j.at("per_class").at(std::string(dataset::to_string(static_cast<dataset::StoneClass>(c))));
            r.per_class[c] = {m.at("precision").get<double>(), m.at("recall").get<double>(), m.at("f1").get<double>(),
                              m.at("support").get<std::size_t>(), m.at("predicted").get<std::size_t>()};
        }
        if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed metrics report: ") + e.what());
    }
}

nlohmann::json to_json(const AggregateReport& r) {
    auto one = [](const MetricSummary& s) {
        return nlohmann::json{{"mean", s.mean}, {"std", s.std}, {"formatted", format_mean_std(s)}};
    };
    return {{"runs", r.runs},
            {"std_kind", "population"},
            {"accuracy", one(r.accuracy)},
            {"precision", one(r.precision)},
            {"recall", one(r.recall)},
            {"f1", one(r.f1)}};
}

}  // namespace stonefuse::evaluation
