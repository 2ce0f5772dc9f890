#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "latentg/common.hpp"

namespace latentg {

enum class BaseLoss { CE, Focal, Tversky, Dice };

inline std::string to_string(BaseLoss loss) {
    switch (loss) {
        case BaseLoss::CE: return "ce";
        case BaseLoss::Focal: return "focal";
        case BaseLoss::Tversky: return "tversky";
        case BaseLoss::Dice: return "dice";
    }
    return "ce";
}

inline BaseLoss base_loss_from_string(const std::string& s) {
    if (s == "ce") return BaseLoss::CE;
    if (s == "focal") return BaseLoss::Focal;
    if (s == "tversky") return BaseLoss::Tversky;
    if (s == "dice") return BaseLoss::Dice;
    throw ConfigError("unknown base loss '" + s + "'");
}

struct LossConfig {
    BaseLoss base_loss = BaseLoss::CE;
    double alpha = 0.56;   // latentG scale on (1 - p)
    double beta = 0.44;    // latentG scale on distance
    double gamma = 75.0;   // MSE scale
    std::vector<double> focal_alpha_t;  // empty -> all ones
    double focal_gamma = 2.0;
    double tversky_alpha = 0.3;
    double tversky_beta = 0.7;
    bool per_sample_composition = false;  // ablation: compose per sample, then mean
};

struct TrainSchedule {
    int current_epoch = 1;  // 1-based; factor e/E reaches 1 at the final epoch
    int total_epochs = 1;

    double factor() const {
        if (total_epochs < 1 || current_epoch < 1 || current_epoch > total_epochs)
            throw ConfigError("invalid schedule: epoch " + std::to_string(current_epoch) +
                              " of " + std::to_string(total_epochs));
        return static_cast<double>(current_epoch) / static_cast<double>(total_epochs);
    }
};

constexpr double kProbEps = 1e-12;       // probability clamp in CE/Focal
constexpr double kConfusionSmooth = 1e-6;  // Tversky/Dice smoothing

// ---------------------------------------------------------------------------
// Softmax helpers (max-subtraction stabilized)

template <typename T>
void softmax_row(const T* logits, T* probs, std::size_t k) {
    T m = logits[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) {
        probs[j] = std::exp(logits[j] - m);
        sum += probs[j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[j] /= sum;
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
    std::vector<T> probs(logits.size());
    softmax_row(logits.data(), probs.data(), logits.size());
    return probs;
}

template <typename T>
T log_sum_exp_row(const T* logits, std::size_t k) {
    T m = logits[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(logits[j] - m);
    return m + std::log(sum);
}

// ---------------------------------------------------------------------------
// Scalar losses

template <typename T>
T cross_entropy(const std::vector<T>& logits, int target) {
    if (logits.size() < 2) throw ConfigError("cross_entropy needs K >= 2");
    for (T v : logits)
        if (!std::isfinite(v)) throw NumericError("non-finite logit in cross_entropy");
    return log_sum_exp_row(logits.data(), logits.size()) -
           logits[static_cast<std::size_t>(target)];
}

template <typename T>
T mse(const std::vector<T>& prediction, const std::vector<T>& target) {
    if (prediction.size() != target.size())
        throw ShapeError("mse length mismatch: " + std::to_string(prediction.size()) +
                         " vs " + std::to_string(target.size()));
    T acc = T(0);
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const T d = prediction[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<T>(prediction.size());
}

// -alpha_t * (1-p_t)^gamma * ln(p_t), p_t clamped to [eps, 1-eps]
template <typename T>
T focal_loss(const std::vector<T>& probs, int target, T alpha_t, T gamma) {
    T p = probs[static_cast<std::size_t>(target)];
    p = std::clamp(p, static_cast<T>(kProbEps), static_cast<T>(1.0 - kProbEps));
    return -alpha_t * std::pow(T(1) - p, gamma) * std::log(p);
}

// ---------------------------------------------------------------------------
// Soft confusion counts and Tversky/Dice

template <typename T>
struct SoftConfusion {
    std::vector<T> tp, fp, fn;  // per class

    std::size_t num_classes() const { return tp.size(); }
};

// tp(c) = sum of probs[i,c] over true-c rows; fp over other rows;
// fn(c) = sum of (1 - probs[i,c]) over true-c rows.
template <typename T>
SoftConfusion<T> soft_confusion(const std::vector<T>& probs,
                                const std::vector<int>& targets, std::size_t k) {
    const std::size_t b = targets.size();
    SoftConfusion<T> conf;
    conf.tp.assign(k, T(0));
    conf.fp.assign(k, T(0));
    conf.fn.assign(k, T(0));
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t y = static_cast<std::size_t>(targets[i]);
        for (std::size_t c = 0; c < k; ++c) {
            const T p = probs[i * k + c];
            if (c == y) {
                conf.tp[c] += p;
                conf.fn[c] += T(1) - p;
            } else {
                conf.fp[c] += p;
            }
        }
    }
    return conf;
}

template <typename T>
T tversky_loss(const SoftConfusion<T>& conf, T alpha, T beta) {
    const std::size_t k = conf.num_classes();
    const T s = static_cast<T>(kConfusionSmooth);
    T acc = T(0);
    for (std::size_t c = 0; c < k; ++c) {
        const T den = conf.tp[c] + alpha * conf.fp[c] + beta * conf.fn[c] + s;
        acc += T(1) - (conf.tp[c] + s) / den;
    }
    return acc / static_cast<T>(k);
}

// Dice is Tversky at alpha = beta = 1/2, so the identity between the two is
// exact rather than within smoothing noise.
template <typename T>
T dice_loss(const SoftConfusion<T>& conf) {
    return tversky_loss(conf, T(0.5), T(0.5));
}

// ---------------------------------------------------------------------------
// LatentG term and total-loss assembly

template <typename T>
T latentg_term(T p, T dist, T alpha, T beta) {
    if (!(p >= T(0) && p <= T(1)))
        throw ContractError("latentg_term: p = " + std::to_string(static_cast<double>(p)) +
                            " outside [0,1]; check p_mode");
    return alpha * (T(1) - p) + beta * dist;
}

// base * (1 + (e/E) * latentg) + mse * gamma
template <typename T>
T total_loss(T base, T latentg, T mse_value, const TrainSchedule& schedule, T gamma) {
    const T factor = T(1) + static_cast<T>(schedule.factor()) * latentg;
    return base * factor + mse_value * gamma;
}

// Per-sample ablation variant: compose each sample's losses first, then mean.
template <typename T>
T total_loss_per_sample(const std::vector<T>& base, const std::vector<T>& latentg,
                        const std::vector<T>& mse_values, const TrainSchedule& schedule,
                        T gamma) {
    if (base.size() != latentg.size() || base.size() != mse_values.size() || base.empty())
        throw ShapeError("total_loss_per_sample: component length mismatch");
    T acc = T(0);
    for (std::size_t i = 0; i < base.size(); ++i)
        acc += total_loss(base[i], latentg[i], mse_values[i], schedule, gamma);
    return acc / static_cast<T>(base.size());
}

// ---------------------------------------------------------------------------
// Batch base-loss with gradient w.r.t. logits (gradient of the batch value)

template <typename T>
struct BaseLossResult {
    T value = T(0);
    std::vector<T> grad_logits;  // [B*K]
};

template <typename T>
BaseLossResult<T> base_loss_batch(BaseLoss kind, const std::vector<T>& logits,
                                  const std::vector<int>& targets, std::size_t k,
                                  const LossConfig& cfg) {
    const std::size_t b = targets.size();
    if (logits.size() != b * k) throw ShapeError("base_loss_batch: logits shape mismatch");
    BaseLossResult<T> out;
    out.grad_logits.assign(b * k, T(0));
    std::vector<T> probs(b * k);
    for (std::size_t i = 0; i < b; ++i)
        softmax_row(logits.data() + i * k, probs.data() + i * k, k);

    switch (kind) {
        case BaseLoss::CE: {
            T acc = T(0);
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t j = 0; j < k; ++j)
                    if (!std::isfinite(logits[i * k + j]))
                        throw NumericError("non-finite logit in cross_entropy");
                acc += log_sum_exp_row(logits.data() + i * k, k) -
                       logits[i * k + static_cast<std::size_t>(targets[i])];
                for (std::size_t j = 0; j < k; ++j)
                    out.grad_logits[i * k + j] = probs[i * k + j] / static_cast<T>(b);
                out.grad_logits[i * k + static_cast<std::size_t>(targets[i])] -=
                    T(1) / static_cast<T>(b);
            }
            out.value = acc / static_cast<T>(b);
            break;
        }
        case BaseLoss::Focal: {
            const T gamma = static_cast<T>(cfg.focal_gamma);
            T acc = T(0);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t y = static_cast<std::size_t>(targets[i]);
                const T alpha_t = cfg.focal_alpha_t.empty()
                                      ? T(1)
                                      : static_cast<T>(cfg.focal_alpha_t.at(y));
                T p = probs[i * k + y];
                const bool clamped = p < static_cast<T>(kProbEps) ||
                                     p > static_cast<T>(1.0 - kProbEps);
                p = std::clamp(p, static_cast<T>(kProbEps),
                               static_cast<T>(1.0 - kProbEps));
                const T one_minus = T(1) - p;
                acc += -alpha_t * std::pow(one_minus, gamma) * std::log(p);
                if (clamped) continue;  // saturated; zero gradient
                // dL/dp, then through softmax
                T dldp;
                if (gamma == T(0)) {
                    dldp = -alpha_t / p;
                } else {
                    dldp = -alpha_t * (-gamma * std::pow(one_minus, gamma - T(1)) *
                                           std::log(p) +
                                       std::pow(one_minus, gamma) / p);
                }
                for (std::size_t j = 0; j < k; ++j) {
                    const T delta = (j == y) ? T(1) : T(0);
                    out.grad_logits[i * k + j] +=
                        dldp * p * (delta - probs[i * k + j]) / static_cast<T>(b);
                }
            }
            out.value = acc / static_cast<T>(b);
            break;
        }
        case BaseLoss::Tversky:
        case BaseLoss::Dice: {
            const T alpha = kind == BaseLoss::Dice ? T(0.5)
                                                   : static_cast<T>(cfg.tversky_alpha);
            const T beta = kind == BaseLoss::Dice ? T(0.5)
                                                  : static_cast<T>(cfg.tversky_beta);
            auto conf = soft_confusion(probs, targets, k);
            out.value = tversky_loss(conf, alpha, beta);
            const T s = static_cast<T>(kConfusionSmooth);
            // dL/dprobs[i,c] is nonzero only in the class-c term of the mean
            std::vector<T> grad_probs(b * k, T(0));
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t y = static_cast<std::size_t>(targets[i]);
                for (std::size_t c = 0; c < k; ++c) {
                    const T num = conf.tp[c] + s;
                    const T den = conf.tp[c] + alpha * conf.fp[c] + beta * conf.fn[c] + s;
                    T d;
                    if (c == y) {
                        // dtp = 1, dfn = -1
                        d = -(den - num * (T(1) - beta)) / (den * den);
                    } else {
                        // dfp = 1
                        d = num * alpha / (den * den);
                    }
                    grad_probs[i * k + c] = d / static_cast<T>(k);
                }
            }
            // through softmax per row
            for (std::size_t i = 0; i < b; ++i) {
                T dot = T(0);
                for (std::size_t c = 0; c < k; ++c)
                    dot += grad_probs[i * k + c] * probs[i * k + c];
                for (std::size_t j = 0; j < k; ++j)
                    out.grad_logits[i * k + j] =
                        probs[i * k + j] * (grad_probs[i * k + j] - dot);
            }
            break;
        }
    }
    return out;
}

// Batch-mean MSE with gradient w.r.t. predictions.
template <typename T>
struct MseBatchResult {
    T value = T(0);
    std::vector<T> grad_pred;  // [B*D]
};

template <typename T>
MseBatchResult<T> mse_batch(const std::vector<T>& pred, const std::vector<T>& target,
                            std::size_t b, std::size_t d) {
    if (pred.size() != b * d || target.size() != b * d)
        throw ShapeError("mse_batch shape mismatch");
    MseBatchResult<T> out;
    out.grad_pred.assign(b * d, T(0));
    T acc = T(0);
    for (std::size_t i = 0; i < b * d; ++i) {
        const T diff = pred[i] - target[i];
        acc += diff * diff;
        out.grad_pred[i] = T(2) * diff / static_cast<T>(b * d);
    }
    out.value = acc / static_cast<T>(b * d);
    return out;
}

}  // namespace latentg
