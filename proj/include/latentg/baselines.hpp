#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "latentg/common.hpp"
#include "latentg/losses.hpp"
#include "latentg/vectorize.hpp"

namespace latentg {

using SparseVector = std::vector<std::pair<int, double>>;

// ---------------------------------------------------------------------------
// Multinomial logistic regression on TF-IDF vectors (softmax regression,
// mini-batch gradient descent on CE + (l2/2)*||W||^2).

struct LogRegModel {
    int num_classes = 0;
    int num_features = 0;
    std::vector<double> weights;  // [K, V]
    std::vector<double> bias;     // [K]

    std::vector<double> scores(const SparseVector& x) const {
        std::vector<double> s(bias);
        for (const auto& [idx, v] : x) {
            if (idx < 0 || idx >= num_features)
                throw ShapeError("logreg: feature index out of range");
            for (int c = 0; c < num_classes; ++c)
                s[static_cast<std::size_t>(c)] +=
                    weights[static_cast<std::size_t>(c) * num_features +
                            static_cast<std::size_t>(idx)] * v;
        }
        return s;
    }

    double weight_norm() const {
        double acc = 0.0;
        for (double w : weights) acc += w * w;
        return std::sqrt(acc);
    }
};

struct LogRegOptions {
    double lr = 0.5;
    int epochs = 50;
    double l2 = 1e-4;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

inline LogRegModel train_logreg(const std::vector<SparseVector>& xs,
                                const std::vector<int>& ys, int num_classes,
                                int num_features, const LogRegOptions& opts) {
    if (xs.empty() || xs.size() != ys.size())
        throw ValidationError("train_logreg: empty or mismatched training set");
    LogRegModel model;
    model.num_classes = num_classes;
    model.num_features = num_features;
    model.weights.assign(static_cast<std::size_t>(num_classes) * num_features, 0.0);
    model.bias.assign(static_cast<std::size_t>(num_classes), 0.0);

    Rng rng(opts.seed);
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    const auto bsz = static_cast<std::size_t>(opts.batch_size);

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < xs.size(); start += bsz) {
            const std::size_t end = std::min(xs.size(), start + bsz);
            const auto b = static_cast<double>(end - start);
            std::vector<double> gw(model.weights.size(), 0.0);
            std::vector<double> gb(model.bias.size(), 0.0);
            for (std::size_t i = start; i < end; ++i) {
                const auto& x = xs[order[i]];
                auto probs = softmax(model.scores(x));
                if (!std::isfinite(probs[0]))
                    throw DivergenceError("logreg diverged at epoch " +
                                          std::to_string(epoch));
                probs[static_cast<std::size_t>(ys[order[i]])] -= 1.0;
                for (int c = 0; c < num_classes; ++c) {
                    gb[static_cast<std::size_t>(c)] += probs[static_cast<std::size_t>(c)] / b;
                    for (const auto& [idx, v] : x)
                        gw[static_cast<std::size_t>(c) * num_features +
                           static_cast<std::size_t>(idx)] +=
                            probs[static_cast<std::size_t>(c)] * v / b;
                }
            }
            for (std::size_t i = 0; i < model.weights.size(); ++i)
                model.weights[i] -= opts.lr * (gw[i] + opts.l2 * model.weights[i]);
            for (std::size_t i = 0; i < model.bias.size(); ++i)
                model.bias[i] -= opts.lr * gb[i];
        }
    }
    return model;
}

// CE + (l2/2)||W||^2 over the full set; used by gradient checks and grid search.
inline double logreg_objective(const LogRegModel& model,
                               const std::vector<SparseVector>& xs,
                               const std::vector<int>& ys, double l2) {
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        acc += cross_entropy(model.scores(xs[i]), ys[i]);
    acc /= static_cast<double>(xs.size());
    double norm = 0.0;
    for (double w : model.weights) norm += w * w;
    return acc + 0.5 * l2 * norm;
}

// ---------------------------------------------------------------------------
// Multinomial naive Bayes on raw term counts, add-1 smoothing.

struct NaiveBayesModel {
    int num_classes = 0;
    int num_features = 0;
    std::vector<double> log_prior;       // [K]
    std::vector<double> log_likelihood;  // [K, V]

    std::vector<double> scores(const SparseVector& counts) const {
        std::vector<double> s(log_prior);
        for (const auto& [idx, v] : counts) {
            if (idx < 0 || idx >= num_features)
                throw ShapeError("naive bayes: feature index out of range");
            for (int c = 0; c < num_classes; ++c)
                s[static_cast<std::size_t>(c)] +=
                    v * log_likelihood[static_cast<std::size_t>(c) * num_features +
                                       static_cast<std::size_t>(idx)];
        }
        return s;
    }
};

inline NaiveBayesModel train_nb(const std::vector<SparseVector>& counts,
                                const std::vector<int>& ys, int num_classes,
                                int num_features) {
    if (counts.empty() || counts.size() != ys.size())
        throw ValidationError("train_nb: empty or mismatched training set");
    NaiveBayesModel model;
    model.num_classes = num_classes;
    model.num_features = num_features;
    std::vector<std::int64_t> class_docs(static_cast<std::size_t>(num_classes), 0);
    std::vector<double> term_counts(static_cast<std::size_t>(num_classes) * num_features, 0.0);
    std::vector<double> class_totals(static_cast<std::size_t>(num_classes), 0.0);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto c = static_cast<std::size_t>(ys[i]);
        ++class_docs[c];
        for (const auto& [idx, v] : counts[i]) {
            term_counts[c * static_cast<std::size_t>(num_features) +
                        static_cast<std::size_t>(idx)] += v;
            class_totals[c] += v;
        }
    }
    for (int c = 0; c < num_classes; ++c)
        if (class_docs[static_cast<std::size_t>(c)] == 0)
            throw ValidationError("train_nb: class " + std::to_string(c) +
                                  " has no documents");
    model.log_prior.resize(static_cast<std::size_t>(num_classes));
    model.log_likelihood.resize(term_counts.size());
    const auto n = static_cast<double>(counts.size());
    for (int c = 0; c < num_classes; ++c) {
        model.log_prior[static_cast<std::size_t>(c)] =
            std::log(static_cast<double>(class_docs[static_cast<std::size_t>(c)]) / n);
        const double denom = class_totals[static_cast<std::size_t>(c)] +
                             static_cast<double>(num_features);
        for (int t = 0; t < num_features; ++t)
            model.log_likelihood[static_cast<std::size_t>(c) * num_features +
                                 static_cast<std::size_t>(t)] =
                std::log((term_counts[static_cast<std::size_t>(c) * num_features +
                                      static_cast<std::size_t>(t)] + 1.0) / denom);
    }
    return model;
}

// Argmax of scores, ties -> lowest index.
template <typename Model>
int predict_class(const Model& model, const SparseVector& x,
                  std::vector<double>* out_scores = nullptr) {
    auto s = model.scores(x);
    int best = 0;
    for (int c = 1; c < model.num_classes; ++c)
        if (s[static_cast<std::size_t>(c)] > s[static_cast<std::size_t>(best)]) best = c;
    if (out_scores) *out_scores = std::move(s);
    return best;
}

// ---------------------------------------------------------------------------
// Small declared grid, 3-fold selection, deterministic under seed.

struct LogRegGridResult {
    LogRegOptions best;
    double best_accuracy = 0.0;
};

inline LogRegGridResult grid_search_logreg(const std::vector<SparseVector>& xs,
                                           const std::vector<int>& ys, int num_classes,
                                           int num_features,
                                           const std::vector<double>& lrs,
                                           const std::vector<double>& l2s,
                                           std::uint64_t seed) {
    const int folds = 3;
    LogRegGridResult result;
    result.best_accuracy = -1.0;
    // contiguous fold assignment after a seeded shuffle
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    for (double lr : lrs) {
        for (double l2 : l2s) {
            double acc_sum = 0.0;
            for (int f = 0; f < folds; ++f) {
                std::vector<SparseVector> train_x, val_x;
                std::vector<int> train_y, val_y;
                for (std::size_t i = 0; i < order.size(); ++i) {
                    if (static_cast<int>(i % folds) == f) {
                        val_x.push_back(xs[order[i]]);
                        val_y.push_back(ys[order[i]]);
                    } else {
                        train_x.push_back(xs[order[i]]);
                        train_y.push_back(ys[order[i]]);
                    }
                }
                LogRegOptions opts;
                opts.lr = lr;
                opts.l2 = l2;
                opts.epochs = 20;
                opts.seed = seed + static_cast<std::uint64_t>(f);
                auto model = train_logreg(train_x, train_y, num_classes, num_features, opts);
                std::int64_t correct = 0;
                for (std::size_t i = 0; i < val_x.size(); ++i)
                    if (predict_class(model, val_x[i]) == val_y[i]) ++correct;
                acc_sum += static_cast<double>(correct) / static_cast<double>(val_x.size());
            }
            const double acc = acc_sum / folds;
            if (acc > result.best_accuracy) {
                result.best_accuracy = acc;
                result.best.lr = lr;
                result.best.l2 = l2;
                result.best.seed = seed;
            }
        }
    }
    return result;
}

}  // namespace latentg
