#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentg/common.hpp"
#include "latentg/csv.hpp"

namespace latentg {

struct MetricsReport {
    std::vector<std::int64_t> confusion;  // [K*K], rows = true class
    int num_classes = 0;
    double accuracy = 0.0;
    std::vector<double> precision, recall, f1;  // per class; 0 when undefined
    std::vector<std::int64_t> support;          // true count per class
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;

    std::int64_t at(int true_class, int pred_class) const {
        return confusion[static_cast<std::size_t>(true_class * num_classes + pred_class)];
    }
};

inline MetricsReport compute_metrics(const std::vector<int>& predictions,
                                     const std::vector<int>& labels, int k) {
    if (predictions.size() != labels.size())
        throw ShapeError("compute_metrics: prediction/label count mismatch");
    if (predictions.empty()) throw ValidationError("compute_metrics: empty input");
    MetricsReport r;
    r.num_classes = k;
    r.confusion.assign(static_cast<std::size_t>(k) * k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
        ++r.confusion[static_cast<std::size_t>(labels[i] * k + predictions[i])];

    const auto n = static_cast<double>(labels.size());
    std::int64_t trace = 0;
    r.precision.assign(static_cast<std::size_t>(k), 0.0);
    r.recall.assign(static_cast<std::size_t>(k), 0.0);
    r.f1.assign(static_cast<std::size_t>(k), 0.0);
    r.support.assign(static_cast<std::size_t>(k), 0);
    for (int c = 0; c < k; ++c) {
        std::int64_t rowsum = 0, colsum = 0;
        for (int j = 0; j < k; ++j) {
            rowsum += r.at(c, j);
            colsum += r.at(j, c);
        }
        r.support[static_cast<std::size_t>(c)] = rowsum;
        const std::int64_t diag = r.at(c, c);
        trace += diag;
        const double p = colsum > 0 ? static_cast<double>(diag) / static_cast<double>(colsum) : 0.0;
        const double rc = rowsum > 0 ? static_cast<double>(diag) / static_cast<double>(rowsum) : 0.0;
        r.precision[static_cast<std::size_t>(c)] = p;
        r.recall[static_cast<std::size_t>(c)] = rc;
        r.f1[static_cast<std::size_t>(c)] = (p + rc) > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
    }
    r.accuracy = static_cast<double>(trace) / n;
    for (int c = 0; c < k; ++c) {
        const double w = static_cast<double>(r.support[static_cast<std::size_t>(c)]) / n;
        r.macro_precision += r.precision[static_cast<std::size_t>(c)] / k;
        r.macro_recall += r.recall[static_cast<std::size_t>(c)] / k;
        r.macro_f1 += r.f1[static_cast<std::size_t>(c)] / k;
        r.weighted_precision += w * r.precision[static_cast<std::size_t>(c)];
        r.weighted_recall += w * r.recall[static_cast<std::size_t>(c)];
        r.weighted_f1 += w * r.f1[static_cast<std::size_t>(c)];
    }
    return r;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
    return {{"accuracy", r.accuracy},
            {"num_classes", r.num_classes},
            {"confusion", r.confusion},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f1", r.f1},
            {"support", r.support},
            {"macro", {{"precision", r.macro_precision}, {"recall", r.macro_recall}, {"f1", r.macro_f1}}},
            {"weighted", {{"precision", r.weighted_precision}, {"recall", r.weighted_recall}, {"f1", r.weighted_f1}}}};
}

inline void save_metrics_json(const MetricsReport& r, const std::string& path,
                              const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json j = metrics_to_json(r);
    for (auto& [key, value] : extra.items()) j[key] = value;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write metrics: " + path);
    out << j.dump(2) << '\n';
}

inline void save_confusion_csv(const MetricsReport& r, const std::string& path) {
    CsvWriter w(path);
    for (int c = 0; c < r.num_classes; ++c) {
        std::vector<std::string> row;
        for (int j = 0; j < r.num_classes; ++j)
            row.push_back(std::to_string(r.at(c, j)));
        w.row(row);
    }
}

}  // namespace latentg
