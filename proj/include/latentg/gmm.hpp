#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentg/common.hpp"
#include "latentg/container.hpp"

namespace latentg {

// Diagonal-covariance Gaussian mixture fitted by EM in log space.
// All mixture math runs in 64-bit.
struct GmmModel {
    int num_components = 0;
    int dim = 0;
    std::vector<double> weights;              // [K]
    std::vector<double> means;                // [K*D]
    std::vector<double> variances;            // [K*D], floored
    std::vector<int> component_to_class;      // [K], -1 until mapped
    int iterations = 0;
    double final_log_likelihood = 0.0;
    bool degenerate = false;
    std::vector<double> log_likelihood_history;  // one entry per EM iteration

    double mean(int k, int d) const {
        return means[static_cast<std::size_t>(k * dim + d)];
    }
    double variance(int k, int d) const {
        return variances[static_cast<std::size_t>(k * dim + d)];
    }
};

struct GmmEval {
    std::vector<double> log_densities;  // per component
    std::vector<double> posteriors;     // responsibilities, sum to 1
    int most_likely = 0;                // argmax posterior, ties -> lowest index
};

constexpr double kVarianceFloor = 1e-6;

namespace gmm_detail {

inline double log_gaussian_diag(const double* x, const double* mu, const double* var,
                                int dim) {
    double acc = 0.0;
    for (int d = 0; d < dim; ++d) {
        const double diff = x[d] - mu[d];
        acc += -0.5 * (std::log(2.0 * M_PI * var[d]) + diff * diff / var[d]);
    }
    return acc;
}

inline double log_sum_exp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// k-means++ seeding over the rows of `data`.
inline std::vector<std::size_t> kmeanspp_seeds(const std::vector<double>& data,
                                               std::size_t n, int dim, int k, Rng& rng) {
    std::vector<std::size_t> seeds;
    seeds.push_back(rng.index(n));
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    while (seeds.size() < static_cast<std::size_t>(k)) {
        const double* last = data.data() + seeds.back() * static_cast<std::size_t>(dim);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* xi = data.data() + i * static_cast<std::size_t>(dim);
            double d2 = 0.0;
            for (int d = 0; d < dim; ++d) {
                const double diff = xi[d] - last[d];
                d2 += diff * diff;
            }
            dist2[i] = std::min(dist2[i], d2);
            total += dist2[i];
        }
        if (total <= 0.0) {
            // all remaining points coincide with chosen seeds
            seeds.push_back(rng.index(n));
            continue;
        }
        double r = rng.uniform() * total;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            r -= dist2[i];
            if (r <= 0.0) { pick = i; break; }
        }
        seeds.push_back(pick);
    }
    return seeds;
}

}  // namespace gmm_detail

inline GmmEval gmm_evaluate(const GmmModel& model, const double* x, int dim) {
    if (dim != model.dim)
        throw ShapeError("gmm_evaluate: point has dim " + std::to_string(dim) +
                         ", model expects " + std::to_string(model.dim));
    GmmEval eval;
    const int k = model.num_components;
    eval.log_densities.resize(static_cast<std::size_t>(k));
    std::vector<double> log_joint(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        eval.log_densities[static_cast<std::size_t>(c)] = gmm_detail::log_gaussian_diag(
            x, model.means.data() + static_cast<std::size_t>(c) * model.dim,
            model.variances.data() + static_cast<std::size_t>(c) * model.dim, model.dim);
        log_joint[static_cast<std::size_t>(c)] =
            std::log(model.weights[static_cast<std::size_t>(c)]) +
            eval.log_densities[static_cast<std::size_t>(c)];
    }
    const double lse = gmm_detail::log_sum_exp(log_joint);
    eval.posteriors.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c)
        eval.posteriors[static_cast<std::size_t>(c)] =
            std::exp(log_joint[static_cast<std::size_t>(c)] - lse);
    eval.most_likely = 0;
    for (int c = 1; c < k; ++c)
        if (eval.posteriors[static_cast<std::size_t>(c)] >
            eval.posteriors[static_cast<std::size_t>(eval.most_likely)])
            eval.most_likely = c;
    return eval;
}

inline GmmEval gmm_evaluate(const GmmModel& model, const std::vector<double>& x) {
    return gmm_evaluate(model, x.data(), static_cast<int>(x.size()));
}

inline GmmModel gmm_fit(const std::vector<double>& features, std::size_t n, int dim,
                        int k, std::uint64_t seed, int max_iter = 200,
                        double tol = 1e-6) {
    if (n < static_cast<std::size_t>(k))
        throw ValidationError("gmm_fit: N=" + std::to_string(n) + " < K=" +
                              std::to_string(k));
    if (dim < 1 || k < 1) throw ConfigError("gmm_fit: invalid K or D");
    for (double v : features)
        if (!std::isfinite(v)) throw NumericError("gmm_fit: non-finite feature value");

    GmmModel model;
    model.num_components = k;
    model.dim = dim;
    model.weights.assign(static_cast<std::size_t>(k), 1.0 / k);
    model.component_to_class.assign(static_cast<std::size_t>(k), -1);

    // per-dimension data variance for initialization
    std::vector<double> data_mean(static_cast<std::size_t>(dim), 0.0);
    std::vector<double> data_var(static_cast<std::size_t>(dim), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (int d = 0; d < dim; ++d)
            data_mean[static_cast<std::size_t>(d)] +=
                features[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)];
    for (int d = 0; d < dim; ++d) data_mean[static_cast<std::size_t>(d)] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int d = 0; d < dim; ++d) {
            const double diff =
                features[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)] -
                data_mean[static_cast<std::size_t>(d)];
            data_var[static_cast<std::size_t>(d)] += diff * diff;
        }
    bool all_identical = true;
    for (int d = 0; d < dim; ++d) {
        data_var[static_cast<std::size_t>(d)] =
            std::max(data_var[static_cast<std::size_t>(d)] / static_cast<double>(n),
                     kVarianceFloor);
        if (data_var[static_cast<std::size_t>(d)] > kVarianceFloor) all_identical = false;
    }

    Rng rng(seed);
    auto seeds = gmm_detail::kmeanspp_seeds(features, n, dim, k, rng);
    model.means.resize(static_cast<std::size_t>(k * dim));
    model.variances.resize(static_cast<std::size_t>(k * dim));
    for (int c = 0; c < k; ++c)
        for (int d = 0; d < dim; ++d) {
            model.means[static_cast<std::size_t>(c * dim + d)] =
                features[seeds[static_cast<std::size_t>(c)] * static_cast<std::size_t>(dim) +
                         static_cast<std::size_t>(d)];
            model.variances[static_cast<std::size_t>(c * dim + d)] =
                data_var[static_cast<std::size_t>(d)];
        }

    if (all_identical) {
        model.degenerate = true;
        model.iterations = 0;
        std::vector<double> lj(static_cast<std::size_t>(k));
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < k; ++c)
                lj[static_cast<std::size_t>(c)] =
                    std::log(model.weights[static_cast<std::size_t>(c)]) +
                    gmm_detail::log_gaussian_diag(
                        features.data() + i * static_cast<std::size_t>(dim),
                        model.means.data() + static_cast<std::size_t>(c * dim),
                        model.variances.data() + static_cast<std::size_t>(c * dim), dim);
            ll += gmm_detail::log_sum_exp(lj);
        }
        model.final_log_likelihood = ll;
        return model;
    }

    std::vector<double> resp(n * static_cast<std::size_t>(k));
    double prev_ll = -std::numeric_limits<double>::infinity();
    std::vector<double> log_joint(static_cast<std::size_t>(k));
    for (int iter = 1; iter <= max_iter; ++iter) {
        // E-step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* xi = features.data() + i * static_cast<std::size_t>(dim);
            for (int c = 0; c < k; ++c)
                log_joint[static_cast<std::size_t>(c)] =
                    std::log(model.weights[static_cast<std::size_t>(c)]) +
                    gmm_detail::log_gaussian_diag(
                        xi, model.means.data() + static_cast<std::size_t>(c * dim),
                        model.variances.data() + static_cast<std::size_t>(c * dim), dim);
            const double lse = gmm_detail::log_sum_exp(log_joint);
            ll += lse;
            for (int c = 0; c < k; ++c)
                resp[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)] =
                    std::exp(log_joint[static_cast<std::size_t>(c)] - lse);
        }
        model.iterations = iter;
        model.final_log_likelihood = ll;
        model.log_likelihood_history.push_back(ll);
        if (iter > 1) {
            const double rel = std::abs(ll - prev_ll) /
                               std::max(1.0, std::abs(prev_ll));
            if (rel < tol) break;
        }
        prev_ll = ll;

        // M-step
        for (int c = 0; c < k; ++c) {
            double nk = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                nk += resp[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)];
            if (nk < 1e-12) {
                // dead component; leave its parameters, reset a tiny weight
                model.weights[static_cast<std::size_t>(c)] = 1e-12;
                continue;
            }
            model.weights[static_cast<std::size_t>(c)] = nk / static_cast<double>(n);
            for (int d = 0; d < dim; ++d) {
                double m = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    m += resp[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)] *
                         features[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)];
                m /= nk;
                double v = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double diff =
                        features[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)] - m;
                    v += resp[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)] *
                         diff * diff;
                }
                model.means[static_cast<std::size_t>(c * dim + d)] = m;
                model.variances[static_cast<std::size_t>(c * dim + d)] =
                    std::max(v / nk, kVarianceFloor);
            }
        }
        // renormalize weights (dead-component resets can leave them off by eps)
        double wsum = 0.0;
        for (double w : model.weights) wsum += w;
        for (double& w : model.weights) w /= wsum;
    }
    return model;
}

inline GmmModel gmm_fit(const std::vector<std::vector<double>>& rows, int k,
                        std::uint64_t seed, int max_iter = 200, double tol = 1e-6) {
    if (rows.empty()) throw ValidationError("gmm_fit: empty data");
    const int dim = static_cast<int>(rows[0].size());
    std::vector<double> flat;
    flat.reserve(rows.size() * rows[0].size());
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != dim) throw ShapeError("gmm_fit: ragged rows");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return gmm_fit(flat, rows.size(), dim, k, seed, max_iter, tol);
}

// Majority class among hard-assigned points; empty components inherit the
// class of the component with the nearest mean.
inline std::vector<int> map_components_to_classes(GmmModel& model,
                                                  const std::vector<double>& features,
                                                  std::size_t n,
                                                  const std::vector<int>& labels,
                                                  int num_classes) {
    if (labels.size() != n) throw ShapeError("map_components_to_classes: label count mismatch");
    const int k = model.num_components;
    std::vector<std::vector<std::int64_t>> votes(
        static_cast<std::size_t>(k),
        std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
    for (std::size_t i = 0; i < n; ++i) {
        auto eval = gmm_evaluate(model, features.data() + i * static_cast<std::size_t>(model.dim),
                                 model.dim);
        ++votes[static_cast<std::size_t>(eval.most_likely)]
              [static_cast<std::size_t>(labels[i])];
    }
    std::vector<int> mapping(static_cast<std::size_t>(k), -1);
    for (int c = 0; c < k; ++c) {
        std::int64_t best = 0;
        int best_class = -1;
        for (int cls = 0; cls < num_classes; ++cls) {
            const std::int64_t v = votes[static_cast<std::size_t>(c)][static_cast<std::size_t>(cls)];
            if (v > best) {  // ties resolve to the lower class index
                best = v;
                best_class = cls;
            }
        }
        mapping[static_cast<std::size_t>(c)] = best_class;
    }
    // empty components: class of the nearest non-empty component's mean
    for (int c = 0; c < k; ++c) {
        if (mapping[static_cast<std::size_t>(c)] >= 0) continue;
        double best_d2 = std::numeric_limits<double>::infinity();
        int nearest = -1;
        for (int other = 0; other < k; ++other) {
            if (mapping[static_cast<std::size_t>(other)] < 0) continue;
            double d2 = 0.0;
            for (int d = 0; d < model.dim; ++d) {
                const double diff = model.mean(c, d) - model.mean(other, d);
                d2 += diff * diff;
            }
            if (d2 < best_d2) {
                best_d2 = d2;
                nearest = other;
            }
        }
        mapping[static_cast<std::size_t>(c)] =
            nearest >= 0 ? mapping[static_cast<std::size_t>(nearest)] : 0;
    }
    model.component_to_class = mapping;
    return mapping;
}

// ---------------------------------------------------------------------------
// Persistence

inline void gmm_save(const GmmModel& model, const std::string& path) {
    Container c;
    c.kind = "gmm";
    c.config = {{"num_components", model.num_components},
                {"dim", model.dim},
                {"iterations", model.iterations},
                {"final_log_likelihood", model.final_log_likelihood},
                {"degenerate", model.degenerate},
                {"component_to_class", model.component_to_class}};
    c.add_f64("weights", {model.num_components}, model.weights);
    c.add_f64("means", {model.num_components, model.dim}, model.means);
    c.add_f64("variances", {model.num_components, model.dim}, model.variances);
    c.save(path);
}

inline GmmModel gmm_load(const std::string& path) {
    Container c = Container::load(path);
    if (c.kind != "gmm") throw FormatError("not a gmm file: " + path);
    GmmModel model;
    model.num_components = c.config.at("num_components").get<int>();
    model.dim = c.config.at("dim").get<int>();
    model.iterations = c.config.at("iterations").get<int>();
    model.final_log_likelihood = c.config.at("final_log_likelihood").get<double>();
    model.degenerate = c.config.at("degenerate").get<bool>();
    model.component_to_class = c.config.at("component_to_class").get<std::vector<int>>();
    model.weights = c.get("weights").f64;
    model.means = c.get("means").f64;
    model.variances = c.get("variances").f64;
    const auto kk = static_cast<std::size_t>(model.num_components);
    const auto kd = kk * static_cast<std::size_t>(model.dim);
    if (model.weights.size() != kk || model.means.size() != kd ||
        model.variances.size() != kd)
        throw ShapeError("gmm file header/blob shape mismatch: " + path);
    return model;
}

inline void gmm_report(const GmmModel& model, const std::string& path) {
    nlohmann::json report = {{"num_components", model.num_components},
                             {"dim", model.dim},
                             {"iterations", model.iterations},
                             {"final_log_likelihood", model.final_log_likelihood},
                             {"degenerate", model.degenerate},
                             {"component_to_class", model.component_to_class},
                             {"weights", model.weights}};
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write gmm report: " + path);
    out << report.dump(2) << '\n';
}

}  // namespace latentg
