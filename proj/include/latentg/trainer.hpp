#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentg/common.hpp"
#include "latentg/corpus.hpp"
#include "latentg/csv.hpp"
#include "latentg/distill.hpp"
#include "latentg/gmm.hpp"
#include "latentg/losses.hpp"
#include "latentg/metrics.hpp"
#include "latentg/net.hpp"
#include "latentg/vectorize.hpp"

namespace latentg {

struct TrainOptions {
    double lr = 0.01;
    int batch_size = 32;
    int epochs = 1;
    std::uint64_t seed = 0;
    bool log_signals = false;          // dump per-sample (p, dist) each epoch
    std::string signals_dir;           // target directory for signal dumps
};

struct EpochRecord {
    int epoch = 0;
    double base = 0.0;
    double latentg_mean = 0.0;
    double mse = 0.0;
    double total = 0.0;
    double modulation_factor = 1.0;  // 1 + (e/E) * latentg_mean
};

struct TrainRun {
    std::vector<EpochRecord> log;
    std::uint64_t seed = 0;
    std::string config_digest;
};

struct DistillContext {
    const TeacherFeatureStore* store = nullptr;
    const GmmModel* gmm = nullptr;
    DistillConfig config;
};

// One training loop for both roles: the teacher trains without a distill
// context (base + gamma*MSE); the student adds the latentG modulation from
// per-sample transfer signals recomputed every batch.
class DualTrainer {
public:
    DualTrainer(const Corpus& corpus, const Vocabulary& vocab,
                const NetworkConfig& net_cfg, const LossConfig& loss_cfg,
                const TrainOptions& opts, const DistillContext* distill = nullptr)
        : net_cfg_(net_cfg),
          loss_cfg_(loss_cfg),
          opts_(opts),
          distill_(distill),
          shuffle_rng_(opts.seed + 1) {
        if (corpus.empty()) throw ValidationError("training corpus is empty");
        if (net_cfg_.vocab_size != vocab.size())
            throw ConfigError("network vocab_size != vocabulary size");
        if (distill_ && distill_->store &&
            distill_->store->feature_dim != net_cfg_.feature_dim())
            throw ConfigError("teacher feature dim does not match student network");
        for (const auto& s : corpus.samples()) {
            sequences_.push_back(encode(s.clean_text, vocab, net_cfg_.max_len, s.id));
            labels_.push_back(s.label);
        }
        params_ = init_parameters<float>(net_cfg_, opts.seed);
    }

    Parameters<float>& params() { return params_; }
    const Parameters<float>& params() const { return params_; }
    void set_params(Parameters<float> p) { params_ = std::move(p); }

    EpochRecord run_epoch(const TrainSchedule& schedule) {
        const std::size_t n = sequences_.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng_.shuffle(order);

        const auto bsz = static_cast<std::size_t>(opts_.batch_size);
        double sum_base = 0.0, sum_lg = 0.0, sum_mse = 0.0;
        std::size_t batches = 0;

        std::ofstream signal_dump;
        if (opts_.log_signals && distill_) {
            signal_dump.open(opts_.signals_dir + "/signals_epoch" +
                             std::to_string(schedule.current_epoch) + ".csv");
            signal_dump << "id,p,dist,component\n";
        }

        for (std::size_t start = 0; start < n; start += bsz) {
            const std::size_t end = std::min(n, start + bsz);
            const std::size_t b = end - start;
            std::vector<TokenSequence> batch;
            std::vector<int> targets;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(sequences_[order[i]]);
                targets.push_back(labels_[order[i]]);
            }

            auto out = forward(params_, net_cfg_, batch, NetMode::Train);

            // frozen reconstruction targets
            const int E = net_cfg_.embed_dim;
            std::vector<float> targets_recon(b * static_cast<std::size_t>(E));
            for (std::size_t i = 0; i < b; ++i) {
                auto t = reconstruction_target(params_, net_cfg_, batch[i]);
                std::copy(t.begin(), t.end(),
                          targets_recon.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(E)));
            }

            auto base = base_loss_batch(loss_cfg_.base_loss, out.logits, targets,
                                        static_cast<std::size_t>(net_cfg_.num_classes),
                                        loss_cfg_);
            auto mse_res = mse_batch(out.reconstruction, targets_recon, b,
                                     static_cast<std::size_t>(E));

            double lg_mean = 0.0;
            const int Ld = net_cfg_.latent_dim, K = net_cfg_.num_classes;
            std::vector<float> dlatent_sig(b * static_cast<std::size_t>(Ld), 0.0f);
            std::vector<float> dlogits_sig(b * static_cast<std::size_t>(K), 0.0f);
            if (distill_) {
                const std::size_t d = static_cast<std::size_t>(net_cfg_.feature_dim());
                std::vector<double> feature(d);
                for (std::size_t i = 0; i < b; ++i) {
                    for (int j = 0; j < Ld; ++j)
                        feature[static_cast<std::size_t>(j)] = static_cast<double>(
                            out.latent[i * static_cast<std::size_t>(Ld) + static_cast<std::size_t>(j)]);
                    for (int j = 0; j < K; ++j)
                        feature[static_cast<std::size_t>(Ld + j)] = static_cast<double>(
                            out.logits[i * static_cast<std::size_t>(K) + static_cast<std::size_t>(j)]);
                    auto sig = compute_signal(feature, batch[i].sample_id,
                                              *distill_->store, *distill_->gmm,
                                              targets[static_cast<std::size_t>(i)],
                                              distill_->config);
                    lg_mean += latentg_term(sig.signal.p, sig.signal.dist,
                                            loss_cfg_.alpha, loss_cfg_.beta);
                    if (signal_dump.is_open())
                        signal_dump << batch[i].sample_id << ',' << sig.signal.p << ','
                                    << sig.signal.dist << ',' << sig.signal.component
                                    << '\n';
                    // d latentg_i / dx = -alpha dp/dx + beta ddist/dx, /b for the mean
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dlg = (-loss_cfg_.alpha * sig.dp_dx[j] +
                                            loss_cfg_.beta * sig.ddist_dx[j]) /
                                           static_cast<double>(b);
                        if (j < static_cast<std::size_t>(Ld))
                            dlatent_sig[i * static_cast<std::size_t>(Ld) + j] +=
                                static_cast<float>(dlg);
                        else
                            dlogits_sig[i * static_cast<std::size_t>(K) +
                                        (j - static_cast<std::size_t>(Ld))] +=
                                static_cast<float>(dlg);
                    }
                }
                lg_mean /= static_cast<double>(b);
            }

            TrainSchedule sched = schedule;
            const double f = sched.factor();
            const double total = total_loss(static_cast<double>(base.value), lg_mean,
                                            static_cast<double>(mse_res.value), sched,
                                            loss_cfg_.gamma);
            if (!std::isfinite(total))
                throw DivergenceError("non-finite loss at epoch " +
                                      std::to_string(schedule.current_epoch));

            // compose upstream gradients of the total loss
            UpstreamGradients<float> up;
            up.dlogits.assign(base.grad_logits.size(), 0.0f);
            const auto base_scale = static_cast<float>(1.0 + f * lg_mean);
            for (std::size_t i = 0; i < base.grad_logits.size(); ++i)
                up.dlogits[i] = base_scale * base.grad_logits[i];
            const auto sig_scale = static_cast<float>(static_cast<double>(base.value) * f);
            up.dlatent.assign(dlatent_sig.size(), 0.0f);
            for (std::size_t i = 0; i < dlatent_sig.size(); ++i)
                up.dlatent[i] = sig_scale * dlatent_sig[i];
            for (std::size_t i = 0; i < dlogits_sig.size(); ++i)
                up.dlogits[i] += sig_scale * dlogits_sig[i];
            up.drecon.assign(mse_res.grad_pred.size(), 0.0f);
            const auto gamma = static_cast<float>(loss_cfg_.gamma);
            for (std::size_t i = 0; i < mse_res.grad_pred.size(); ++i)
                up.drecon[i] = gamma * mse_res.grad_pred[i];

            auto grads = backward(params_, net_cfg_, out.cache, up);
            sgd_step(params_, grads, static_cast<float>(opts_.lr), &out.cache);

            sum_base += static_cast<double>(base.value);
            sum_lg += lg_mean;
            sum_mse += static_cast<double>(mse_res.value);
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = schedule.current_epoch;
        rec.base = sum_base / static_cast<double>(batches);
        rec.latentg_mean = sum_lg / static_cast<double>(batches);
        rec.mse = sum_mse / static_cast<double>(batches);
        TrainSchedule sched = schedule;
        rec.modulation_factor = 1.0 + sched.factor() * rec.latentg_mean;
        rec.total = total_loss(rec.base, rec.latentg_mean, rec.mse, sched, loss_cfg_.gamma);
        return rec;
    }

    TrainRun run_all() {
        TrainRun run;
        run.seed = opts_.seed;
        for (int e = 1; e <= opts_.epochs; ++e)
            run.log.push_back(run_epoch({e, opts_.epochs}));
        return run;
    }

private:
    NetworkConfig net_cfg_;
    LossConfig loss_cfg_;
    TrainOptions opts_;
    const DistillContext* distill_;
    Rng shuffle_rng_;
    std::vector<TokenSequence> sequences_;
    std::vector<int> labels_;
    Parameters<float> params_;
};

inline TrainRun train_teacher(const Corpus& corpus, const Vocabulary& vocab,
                              const NetworkConfig& net_cfg, const LossConfig& loss_cfg,
                              const TrainOptions& opts, Parameters<float>* out_params) {
    DualTrainer trainer(corpus, vocab, net_cfg, loss_cfg, opts);
    TrainRun run = trainer.run_all();
    if (out_params) *out_params = std::move(trainer.params());
    return run;
}

inline TrainRun train_student(const Corpus& corpus, const Vocabulary& vocab,
                              const NetworkConfig& net_cfg, const LossConfig& loss_cfg,
                              const TrainOptions& opts, const DistillContext& distill,
                              Parameters<float>* out_params) {
    DualTrainer trainer(corpus, vocab, net_cfg, loss_cfg, opts, &distill);
    TrainRun run = trainer.run_all();
    if (out_params) *out_params = std::move(trainer.params());
    return run;
}

inline void save_training_log(const TrainRun& run, const std::string& path) {
    CsvWriter w(path);
    w.row({"epoch", "base", "latentg_mean", "mse", "total", "modulation_factor"});
    char buf[48];
    for (const auto& rec : run.log) {
        std::vector<std::string> row{std::to_string(rec.epoch)};
        for (double v : {rec.base, rec.latentg_mean, rec.mse, rec.total,
                         rec.modulation_factor}) {
            std::snprintf(buf, sizeof(buf), "%.12g", v);
            row.emplace_back(buf);
        }
        w.row(row);
    }
}

// Argmax predictions (ties resolve to the lowest class index) and the full
// metrics report.
inline std::vector<int> predict(const Parameters<float>& params,
                                const NetworkConfig& net_cfg, const Corpus& corpus,
                                const Vocabulary& vocab, int batch_size = 64) {
    if (corpus.empty()) throw ValidationError("predict: empty corpus");
    std::vector<int> preds;
    const int K = net_cfg.num_classes;
    std::vector<TokenSequence> batch;
    auto flush = [&]() {
        if (batch.empty()) return;
        auto out = forward(params, net_cfg, batch, NetMode::Eval);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            int best = 0;
            for (int c = 1; c < K; ++c)
                if (out.logits[i * static_cast<std::size_t>(K) + static_cast<std::size_t>(c)] >
                    out.logits[i * static_cast<std::size_t>(K) + static_cast<std::size_t>(best)])
                    best = c;
            preds.push_back(best);
        }
        batch.clear();
    };
    for (const auto& s : corpus.samples()) {
        batch.push_back(encode(s.clean_text, vocab, net_cfg.max_len, s.id));
        if (static_cast<int>(batch.size()) == batch_size) flush();
    }
    flush();
    return preds;
}

inline MetricsReport evaluate(const Parameters<float>& params,
                              const NetworkConfig& net_cfg, const Corpus& corpus,
                              const Vocabulary& vocab) {
    auto preds = predict(params, net_cfg, corpus, vocab);
    std::vector<int> labels;
    labels.reserve(corpus.size());
    for (const auto& s : corpus.samples()) labels.push_back(s.label);
    return compute_metrics(preds, labels, net_cfg.num_classes);
}

// ---------------------------------------------------------------------------
// k-fold experiment driver: full pipeline per fold, no leakage across folds.

struct KFoldConfig {
    int k = 3;
    int min_freq = 2;
    NetworkConfig net;  // vocab_size filled per fold
    LossConfig teacher_loss;
    LossConfig student_loss;
    TrainOptions teacher_opts;
    TrainOptions student_opts;
    DistillConfig distill;
};

struct KFoldSummary {
    std::vector<MetricsReport> fold_reports;
    std::vector<std::uint64_t> vocab_digests;
    double mean_accuracy = 0.0, std_accuracy = 0.0;
    double mean_weighted_f1 = 0.0, std_weighted_f1 = 0.0;
};

inline KFoldSummary run_kfold(const Corpus& corpus, const KFoldConfig& cfg,
                              std::uint64_t seed) {
    auto folds = kfold(corpus, cfg.k, seed);
    KFoldSummary summary;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto& [train, validation] = folds[f];
        auto vocab = Vocabulary::build(train, cfg.min_freq);
        summary.vocab_digests.push_back(vocab.digest());
        NetworkConfig net = cfg.net;
        net.vocab_size = vocab.size();
        net.num_classes = corpus.labels().size();

        TrainOptions teacher_opts = cfg.teacher_opts;
        teacher_opts.seed = seed + f * 1000;
        Parameters<float> teacher;
        train_teacher(train, vocab, net, cfg.teacher_loss, teacher_opts, &teacher);

        auto alg1 = run_algorithm1(teacher, net, train, vocab, teacher_opts.seed);

        TrainOptions student_opts = cfg.student_opts;
        student_opts.seed = seed + f * 1000 + 1;
        DistillContext ctx{&alg1.store, &alg1.gmm, cfg.distill};
        Parameters<float> student;
        train_student(train, vocab, net, cfg.student_loss, student_opts, ctx, &student);

        summary.fold_reports.push_back(evaluate(student, net, validation, vocab));
    }
    const auto k = static_cast<double>(summary.fold_reports.size());
    for (const auto& r : summary.fold_reports) {
        summary.mean_accuracy += r.accuracy / k;
        summary.mean_weighted_f1 += r.weighted_f1 / k;
    }
    for (const auto& r : summary.fold_reports) {
        summary.std_accuracy += (r.accuracy - summary.mean_accuracy) *
                                (r.accuracy - summary.mean_accuracy) / k;
        summary.std_weighted_f1 += (r.weighted_f1 - summary.mean_weighted_f1) *
                                   (r.weighted_f1 - summary.mean_weighted_f1) / k;
    }
    summary.std_accuracy = std::sqrt(summary.std_accuracy);
    summary.std_weighted_f1 = std::sqrt(summary.std_weighted_f1);
    return summary;
}

inline nlohmann::json kfold_summary_to_json(const KFoldSummary& s) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& r : s.fold_reports) folds.push_back(metrics_to_json(r));
    nlohmann::json digests = nlohmann::json::array();
    for (auto d : s.vocab_digests) digests.push_back(hex64(d));
    return {{"folds", folds},
            {"vocab_digests", digests},
            {"accuracy", {{"mean", s.mean_accuracy}, {"std", s.std_accuracy}}},
            {"weighted_f1", {{"mean", s.mean_weighted_f1}, {"std", s.std_weighted_f1}}}};
}

}  // namespace latentg
