#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "latentg/common.hpp"
#include "latentg/container.hpp"
#include "latentg/corpus.hpp"
#include "latentg/gmm.hpp"
#include "latentg/net.hpp"
#include "latentg/vectorize.hpp"

namespace latentg {

enum class PMode { TrueClassPosterior, MostLikelyPosterior, ClampedPdf };
enum class DistMode { Feature, Logits };

inline PMode p_mode_from_string(const std::string& s) {
    if (s == "true_class_posterior") return PMode::TrueClassPosterior;
    if (s == "most_likely_posterior") return PMode::MostLikelyPosterior;
    if (s == "clamped_pdf") return PMode::ClampedPdf;
    throw ConfigError("unknown p_mode '" + s + "'");
}

inline DistMode dist_mode_from_string(const std::string& s) {
    if (s == "feature") return DistMode::Feature;
    if (s == "logits") return DistMode::Logits;
    throw ConfigError("unknown dist_mode '" + s + "'");
}

struct DistillConfig {
    PMode p_mode = PMode::TrueClassPosterior;
    DistMode dist_mode = DistMode::Feature;
    bool dist_normalize = false;
    bool stop_gradient_signals = false;
};

// Per-sample teacher feature vectors (latent followed by logits), frozen
// after extraction.
struct TeacherFeatureStore {
    int feature_dim = 0;
    int latent_dim = 0;
    int num_classes = 0;
    std::string teacher_digest;
    std::vector<std::int64_t> ids;
    std::vector<double> features;  // [N, feature_dim]
    std::unordered_map<std::int64_t, std::size_t> index;

    std::size_t size() const { return ids.size(); }

    const double* feature(std::int64_t sample_id) const {
        auto it = index.find(sample_id);
        if (it == index.end())
            throw LookupError("no teacher feature for sample id " +
                              std::to_string(sample_id));
        return features.data() + it->second * static_cast<std::size_t>(feature_dim);
    }

    void rebuild_index() {
        index.clear();
        for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
    }
};

struct TransferSignal {
    double p = 0.0;     // in [0,1] under all three p modes
    double dist = 0.0;  // >= 0
    int component = 0;  // most likely GMM component
};

inline double euclidean_distance(const double* a, const double* b, std::size_t n,
                                 bool normalize) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    double dist = std::sqrt(acc);
    if (normalize) dist /= std::sqrt(static_cast<double>(n));
    return dist;
}

inline double euclidean_distance(const std::vector<double>& a,
                                 const std::vector<double>& b,
                                 bool normalize = false) {
    if (a.size() != b.size())
        throw ShapeError("euclidean_distance: length mismatch " +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    return euclidean_distance(a.data(), b.data(), a.size(), normalize);
}

// Teacher features for every corpus sample, eval mode, deterministic.
inline TeacherFeatureStore extract_teacher_features(const Parameters<float>& teacher,
                                                    const NetworkConfig& cfg,
                                                    const Corpus& corpus,
                                                    const Vocabulary& vocab,
                                                    const std::string& teacher_digest = "") {
    if (cfg.vocab_size != vocab.size())
        throw ConfigError("teacher checkpoint vocab_size " +
                          std::to_string(cfg.vocab_size) +
                          " != vocabulary size " + std::to_string(vocab.size()));
    TeacherFeatureStore store;
    store.latent_dim = cfg.latent_dim;
    store.num_classes = cfg.num_classes;
    store.feature_dim = cfg.feature_dim();
    store.teacher_digest = teacher_digest;
    const std::size_t d = static_cast<std::size_t>(store.feature_dim);
    store.features.reserve(corpus.size() * d);
    for (const auto& s : corpus.samples()) {
        auto seq = encode(s.clean_text, vocab, cfg.max_len, s.id);
        auto out = forward(teacher, cfg, {seq}, NetMode::Eval);
        store.ids.push_back(s.id);
        for (int i = 0; i < cfg.latent_dim; ++i)
            store.features.push_back(static_cast<double>(out.latent[static_cast<std::size_t>(i)]));
        for (int i = 0; i < cfg.num_classes; ++i)
            store.features.push_back(static_cast<double>(out.logits[static_cast<std::size_t>(i)]));
    }
    store.rebuild_index();
    return store;
}

// Signal plus its gradient w.r.t. the student feature vector. The teacher
// store and GMM are constants; the student side carries gradient unless
// stop_gradient_signals is set.
struct SignalWithGrad {
    TransferSignal signal;
    std::vector<double> dp_dx;     // [feature_dim]
    std::vector<double> ddist_dx;  // [feature_dim]
};

inline SignalWithGrad compute_signal(const std::vector<double>& student_feature,
                                     std::int64_t sample_id,
                                     const TeacherFeatureStore& store,
                                     const GmmModel& gmm, int true_class,
                                     const DistillConfig& cfg) {
    const std::size_t d = static_cast<std::size_t>(store.feature_dim);
    if (student_feature.size() != d)
        throw ShapeError("compute_signal: feature length mismatch");
    if (gmm.dim != store.feature_dim)
        throw ShapeError("compute_signal: gmm dim != feature dim");

    SignalWithGrad out;
    out.dp_dx.assign(d, 0.0);
    out.ddist_dx.assign(d, 0.0);

    // distance
    const double* teacher = store.feature(sample_id);
    if (cfg.dist_mode == DistMode::Feature) {
        const double dist = euclidean_distance(student_feature.data(), teacher, d,
                                               cfg.dist_normalize);
        out.signal.dist = dist;
        if (dist > 0.0) {
            const double norm_div = cfg.dist_normalize ? std::sqrt(static_cast<double>(d)) : 1.0;
            for (std::size_t i = 0; i < d; ++i)
                out.ddist_dx[i] = (student_feature[i] - teacher[i]) /
                                  (dist * norm_div * norm_div);
        }
    } else {
        const std::size_t off = static_cast<std::size_t>(store.latent_dim);
        const std::size_t k = static_cast<std::size_t>(store.num_classes);
        const double dist = euclidean_distance(student_feature.data() + off,
                                               teacher + off, k, cfg.dist_normalize);
        out.signal.dist = dist;
        if (dist > 0.0) {
            const double norm_div = cfg.dist_normalize ? std::sqrt(static_cast<double>(k)) : 1.0;
            for (std::size_t i = 0; i < k; ++i)
                out.ddist_dx[off + i] = (student_feature[off + i] - teacher[off + i]) /
                                        (dist * norm_div * norm_div);
        }
    }

    // p and its gradient
    auto eval = gmm_evaluate(gmm, student_feature);
    out.signal.component = eval.most_likely;
    const int kc = gmm.num_components;

    // per-component d log N_k / dx
    auto grad_log_density = [&](int comp, std::vector<double>& g) {
        g.assign(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double mu = gmm.mean(comp, static_cast<int>(i));
            const double var = gmm.variance(comp, static_cast<int>(i));
            g[i] = -(student_feature[i] - mu) / var;
        }
    };

    switch (cfg.p_mode) {
        case PMode::TrueClassPosterior:
        case PMode::MostLikelyPosterior: {
            std::vector<char> selected(static_cast<std::size_t>(kc), 0);
            if (cfg.p_mode == PMode::TrueClassPosterior) {
                for (int c = 0; c < kc; ++c)
                    if (gmm.component_to_class.at(static_cast<std::size_t>(c)) == true_class)
                        selected[static_cast<std::size_t>(c)] = 1;
            } else {
                selected[static_cast<std::size_t>(eval.most_likely)] = 1;
            }
            double p = 0.0;
            for (int c = 0; c < kc; ++c)
                if (selected[static_cast<std::size_t>(c)])
                    p += eval.posteriors[static_cast<std::size_t>(c)];
            out.signal.p = std::min(p, 1.0);
            // dr_k/dx = r_k (g_k - sum_j r_j g_j)
            std::vector<double> gk(d), gbar(d, 0.0);
            std::vector<std::vector<double>> grads(static_cast<std::size_t>(kc));
            for (int c = 0; c < kc; ++c) {
                grad_log_density(c, grads[static_cast<std::size_t>(c)]);
                const double r = eval.posteriors[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < d; ++i)
                    gbar[i] += r * grads[static_cast<std::size_t>(c)][i];
            }
            for (int c = 0; c < kc; ++c) {
                if (!selected[static_cast<std::size_t>(c)]) continue;
                const double r = eval.posteriors[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < d; ++i)
                    out.dp_dx[i] += r * (grads[static_cast<std::size_t>(c)][i] - gbar[i]);
            }
            break;
        }
        case PMode::ClampedPdf: {
            const double density =
                std::exp(eval.log_densities[static_cast<std::size_t>(eval.most_likely)]);
            if (density < 1.0) {
                out.signal.p = density;
                std::vector<double> g;
                grad_log_density(eval.most_likely, g);
                for (std::size_t i = 0; i < d; ++i) out.dp_dx[i] = density * g[i];
            } else {
                out.signal.p = 1.0;  // clamped; zero gradient
            }
            break;
        }
    }

    if (!(out.signal.p >= 0.0 && out.signal.p <= 1.0))
        throw ContractError("compute_signal produced p outside [0,1]");
    if (cfg.stop_gradient_signals) {
        std::fill(out.dp_dx.begin(), out.dp_dx.end(), 0.0);
        std::fill(out.ddist_dx.begin(), out.ddist_dx.end(), 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feature-store persistence (checkpoint container format)

inline void save_feature_store(const TeacherFeatureStore& store, const std::string& path) {
    Container c;
    c.kind = "teacher_features";
    c.config = {{"feature_dim", store.feature_dim},
                {"latent_dim", store.latent_dim},
                {"num_classes", store.num_classes},
                {"teacher_digest", store.teacher_digest},
                {"count", store.ids.size()}};
    std::vector<double> ids_f64(store.ids.begin(), store.ids.end());
    c.add_f64("ids", {static_cast<std::int64_t>(store.ids.size())}, ids_f64);
    c.add_f64("features",
              {static_cast<std::int64_t>(store.ids.size()), store.feature_dim},
              store.features);
    c.save(path);
}

inline TeacherFeatureStore load_feature_store(const std::string& path) {
    Container c = Container::load(path);
    if (c.kind != "teacher_features")
        throw FormatError("not a teacher feature store: " + path);
    TeacherFeatureStore store;
    store.feature_dim = c.config.at("feature_dim").get<int>();
    store.latent_dim = c.config.at("latent_dim").get<int>();
    store.num_classes = c.config.at("num_classes").get<int>();
    store.teacher_digest = c.config.at("teacher_digest").get<std::string>();
    const auto& ids = c.get("ids").f64;
    store.ids.assign(ids.begin(), ids.end());
    store.features = c.get("features").f64;
    if (store.features.size() !=
        store.ids.size() * static_cast<std::size_t>(store.feature_dim))
        throw ShapeError("feature store header/blob mismatch: " + path);
    store.rebuild_index();
    return store;
}

// Steps 1-3 of the transfer procedure: extract teacher features, fit the
// GMM with K = number of classes, build the component->class map.
struct Algorithm1Result {
    TeacherFeatureStore store;
    GmmModel gmm;
};

inline Algorithm1Result run_algorithm1(const Parameters<float>& teacher,
                                       const NetworkConfig& cfg, const Corpus& corpus,
                                       const Vocabulary& vocab, std::uint64_t seed,
                                       int gmm_components = 0,
                                       const std::string& teacher_digest = "") {
    Algorithm1Result result;
    result.store = extract_teacher_features(teacher, cfg, corpus, vocab, teacher_digest);
    const int k = gmm_components > 0 ? gmm_components : cfg.num_classes;
    result.gmm = gmm_fit(result.store.features, result.store.size(),
                         result.store.feature_dim, k, seed);
    std::vector<int> labels;
    labels.reserve(corpus.size());
    for (const auto& s : corpus.samples()) labels.push_back(s.label);
    map_components_to_classes(result.gmm, result.store.features, result.store.size(),
                              labels, cfg.num_classes);
    return result;
}

}  // namespace latentg
