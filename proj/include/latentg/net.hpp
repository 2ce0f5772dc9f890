#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentg/common.hpp"
#include "latentg/container.hpp"
#include "latentg/vectorize.hpp"

namespace latentg {

struct NetworkConfig {
    int vocab_size = 0;
    int embed_dim = 100;
    int conv_channels = 128;
    int kernel_size = 3;
    int latent_dim = 64;
    int num_classes = 7;
    int max_len = 64;

    void validate() const {
        if (vocab_size < 1 || embed_dim < 1 || conv_channels < 1 ||
            kernel_size < 1 || latent_dim < 1 || num_classes < 2 || max_len < 1)
            throw ConfigError("network config has a dimension < 1 (or K < 2)");
    }

    int feature_dim() const { return latent_dim + num_classes; }

    nlohmann::json to_json() const {
        return {{"vocab_size", vocab_size},   {"embed_dim", embed_dim},
                {"conv_channels", conv_channels}, {"kernel_size", kernel_size},
                {"latent_dim", latent_dim},   {"num_classes", num_classes},
                {"max_len", max_len}};
    }

    static NetworkConfig from_json(const nlohmann::json& j) {
        NetworkConfig c;
        c.vocab_size = j.at("vocab_size").get<int>();
        c.embed_dim = j.at("embed_dim").get<int>();
        c.conv_channels = j.at("conv_channels").get<int>();
        c.kernel_size = j.at("kernel_size").get<int>();
        c.latent_dim = j.at("latent_dim").get<int>();
        c.num_classes = j.at("num_classes").get<int>();
        c.max_len = j.at("max_len").get<int>();
        return c;
    }
};

// All weights of the dual architecture. Trainable arrays are visited by
// for_each_trainable; batch-norm running statistics are state, not weights.
template <typename T>
struct Parameters {
    std::vector<T> embedding;      // [V, E]
    std::vector<T> conv1_weight;   // [C, E, k]
    std::vector<T> conv1_bias;     // [C]
    std::vector<T> bn1_gamma, bn1_beta;              // [C]
    std::vector<T> bn1_running_mean, bn1_running_var;  // [C]
    std::vector<T> conv2_weight;   // [C, C, k]
    std::vector<T> conv2_bias;     // [C]
    std::vector<T> bn2_gamma, bn2_beta;
    std::vector<T> bn2_running_mean, bn2_running_var;
    std::vector<T> latent_weight;  // [Ld, C]
    std::vector<T> latent_bias;    // [Ld]
    std::vector<T> cls_weight;     // [K, Ld]
    std::vector<T> cls_bias;       // [K]
    std::vector<T> recon_weight;   // [E, Ld]
    std::vector<T> recon_bias;     // [E]

    template <typename Fn>
    void for_each_trainable(Fn&& fn) {
        fn("embedding", embedding);
        fn("conv1.weight", conv1_weight);
        fn("conv1.bias", conv1_bias);
        fn("bn1.gamma", bn1_gamma);
        fn("bn1.beta", bn1_beta);
        fn("conv2.weight", conv2_weight);
        fn("conv2.bias", conv2_bias);
        fn("bn2.gamma", bn2_gamma);
        fn("bn2.beta", bn2_beta);
        fn("latent.weight", latent_weight);
        fn("latent.bias", latent_bias);
        fn("cls.weight", cls_weight);
        fn("cls.bias", cls_bias);
        fn("recon.weight", recon_weight);
        fn("recon.bias", recon_bias);
    }

    template <typename Fn>
    void for_each_state(Fn&& fn) {
        fn("bn1.running_mean", bn1_running_mean);
        fn("bn1.running_var", bn1_running_var);
        fn("bn2.running_mean", bn2_running_mean);
        fn("bn2.running_var", bn2_running_var);
    }

    template <typename U>
    Parameters<U> cast() const {
        Parameters<U> out;
        auto copy = [](const std::vector<T>& src, std::vector<U>& dst) {
            dst.assign(src.begin(), src.end());
        };
        copy(embedding, out.embedding);
        copy(conv1_weight, out.conv1_weight);
        copy(conv1_bias, out.conv1_bias);
        copy(bn1_gamma, out.bn1_gamma);
        copy(bn1_beta, out.bn1_beta);
        copy(bn1_running_mean, out.bn1_running_mean);
        copy(bn1_running_var, out.bn1_running_var);
        copy(conv2_weight, out.conv2_weight);
        copy(conv2_bias, out.conv2_bias);
        copy(bn2_gamma, out.bn2_gamma);
        copy(bn2_beta, out.bn2_beta);
        copy(bn2_running_mean, out.bn2_running_mean);
        copy(bn2_running_var, out.bn2_running_var);
        copy(latent_weight, out.latent_weight);
        copy(latent_bias, out.latent_bias);
        copy(cls_weight, out.cls_weight);
        copy(cls_bias, out.cls_bias);
        copy(recon_weight, out.recon_weight);
        copy(recon_bias, out.recon_bias);
        return out;
    }
};

template <typename T>
using Gradients = Parameters<T>;

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// uniform(-0.05, 0.05) embeddings, Kaiming fan-in conv/linear weights,
// zero biases, BN scale 1 shift 0. Deterministic given seed.
template <typename T>
Parameters<T> init_parameters(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Parameters<T> p;
    Rng rng(seed);
    const int V = cfg.vocab_size, E = cfg.embed_dim, C = cfg.conv_channels,
              k = cfg.kernel_size, Ld = cfg.latent_dim, K = cfg.num_classes;

    p.embedding.resize(static_cast<std::size_t>(V) * E);
    for (auto& w : p.embedding) w = static_cast<T>(rng.uniform(-0.05, 0.05));

    auto kaiming = [&](std::vector<T>& w, std::size_t count, int fan_in) {
        const double std_dev = std::sqrt(2.0 / fan_in);
        w.resize(count);
        for (auto& x : w) x = static_cast<T>(rng.normal() * std_dev);
    };
    kaiming(p.conv1_weight, static_cast<std::size_t>(C) * E * k, E * k);
    p.conv1_bias.assign(static_cast<std::size_t>(C), T(0));
    p.bn1_gamma.assign(static_cast<std::size_t>(C), T(1));
    p.bn1_beta.assign(static_cast<std::size_t>(C), T(0));
    p.bn1_running_mean.assign(static_cast<std::size_t>(C), T(0));
    p.bn1_running_var.assign(static_cast<std::size_t>(C), T(1));
    kaiming(p.conv2_weight, static_cast<std::size_t>(C) * C * k, C * k);
    p.conv2_bias.assign(static_cast<std::size_t>(C), T(0));
    p.bn2_gamma.assign(static_cast<std::size_t>(C), T(1));
    p.bn2_beta.assign(static_cast<std::size_t>(C), T(0));
    p.bn2_running_mean.assign(static_cast<std::size_t>(C), T(0));
    p.bn2_running_var.assign(static_cast<std::size_t>(C), T(1));
    kaiming(p.latent_weight, static_cast<std::size_t>(Ld) * C, C);
    p.latent_bias.assign(static_cast<std::size_t>(Ld), T(0));
    kaiming(p.cls_weight, static_cast<std::size_t>(K) * Ld, Ld);
    p.cls_bias.assign(static_cast<std::size_t>(K), T(0));
    kaiming(p.recon_weight, static_cast<std::size_t>(E) * Ld, Ld);
    p.recon_bias.assign(static_cast<std::size_t>(E), T(0));
    return p;
}

enum class NetMode { Train, Eval };

template <typename T>
struct ForwardCache {
    bool valid = false;
    NetMode mode = NetMode::Train;
    std::size_t batch = 0;
    std::vector<int> tokens;      // [B*L]
    std::vector<int> lengths;     // [B]
    std::vector<T> emb;           // [B, E, L]
    std::vector<T> conv1_out;     // [B, C, L] pre-BN
    std::vector<T> bn1_xhat;      // [B, C, L]
    std::vector<T> bn1_mean, bn1_var;  // batch stats per channel
    std::vector<T> act1;          // [B, C, L] post-ReLU
    std::vector<T> conv2_out;
    std::vector<T> bn2_xhat;
    std::vector<T> bn2_mean, bn2_var;
    std::vector<T> act2;          // [B, C, L]
    std::vector<std::size_t> pool_argmax;  // [B*C]
    std::vector<T> pooled;        // [B, C]
    std::vector<T> latent;        // [B, Ld]
};

template <typename T>
struct ForwardOutput {
    std::vector<T> latent;          // [B, Ld]
    std::vector<T> logits;          // [B, K]
    std::vector<T> reconstruction;  // [B, E]
    ForwardCache<T> cache;
};

namespace net_detail {

// 1-d convolution over time with zero same-padding.
// in: [B, Cin, L], weight: [Cout, Cin, k], out: [B, Cout, L]
template <typename T>
void conv1d_forward(const std::vector<T>& in, const std::vector<T>& weight,
                    const std::vector<T>& bias, std::vector<T>& out, std::size_t b,
                    int cin, int cout, int len, int k) {
    const int pad = (k - 1) / 2;
    out.assign(b * static_cast<std::size_t>(cout) * len, T(0));
    for (std::size_t s = 0; s < b; ++s) {
        const T* in_s = in.data() + s * static_cast<std::size_t>(cin) * len;
        T* out_s = out.data() + s * static_cast<std::size_t>(cout) * len;
        for (int co = 0; co < cout; ++co) {
            T* row = out_s + static_cast<std::size_t>(co) * len;
            for (int t = 0; t < len; ++t) row[t] = bias[static_cast<std::size_t>(co)];
            const T* w_co = weight.data() + static_cast<std::size_t>(co) * cin * k;
            for (int ci = 0; ci < cin; ++ci) {
                const T* in_row = in_s + static_cast<std::size_t>(ci) * len;
                const T* w_row = w_co + static_cast<std::size_t>(ci) * k;
                for (int dk = 0; dk < k; ++dk) {
                    const int shift = dk - pad;
                    const T w = w_row[dk];
                    const int lo = std::max(0, -shift);
                    const int hi = std::min(len, len - shift);
                    for (int t = lo; t < hi; ++t) row[t] += w * in_row[t + shift];
                }
            }
        }
    }
}

// Gradients of conv1d_forward. dout: [B, Cout, L].
template <typename T>
void conv1d_backward(const std::vector<T>& in, const std::vector<T>& weight,
                     const std::vector<T>& dout, std::vector<T>& din,
                     std::vector<T>& dweight, std::vector<T>& dbias, std::size_t b,
                     int cin, int cout, int len, int k) {
    const int pad = (k - 1) / 2;
    din.assign(in.size(), T(0));
    for (std::size_t s = 0; s < b; ++s) {
        const T* in_s = in.data() + s * static_cast<std::size_t>(cin) * len;
        const T* dout_s = dout.data() + s * static_cast<std::size_t>(cout) * len;
        T* din_s = din.data() + s * static_cast<std::size_t>(cin) * len;
        for (int co = 0; co < cout; ++co) {
            const T* drow = dout_s + static_cast<std::size_t>(co) * len;
            for (int t = 0; t < len; ++t) dbias[static_cast<std::size_t>(co)] += drow[t];
            const T* w_co = weight.data() + static_cast<std::size_t>(co) * cin * k;
            T* dw_co = dweight.data() + static_cast<std::size_t>(co) * cin * k;
            for (int ci = 0; ci < cin; ++ci) {
                const T* in_row = in_s + static_cast<std::size_t>(ci) * len;
                T* din_row = din_s + static_cast<std::size_t>(ci) * len;
                const T* w_row = w_co + static_cast<std::size_t>(ci) * k;
                T* dw_row = dw_co + static_cast<std::size_t>(ci) * k;
                for (int dk = 0; dk < k; ++dk) {
                    const int shift = dk - pad;
                    const int lo = std::max(0, -shift);
                    const int hi = std::min(len, len - shift);
                    T dw = T(0);
                    const T w = w_row[dk];
                    for (int t = lo; t < hi; ++t) {
                        dw += drow[t] * in_row[t + shift];
                        din_row[t + shift] += w * drow[t];
                    }
                    dw_row[dk] += dw;
                }
            }
        }
    }
}

// Batch norm over channels; stats over (batch, time). Returns xhat and
// batch statistics for backward / running-stat updates.
template <typename T>
void batchnorm_forward(const std::vector<T>& in, const std::vector<T>& gamma,
                       const std::vector<T>& beta, const std::vector<T>& running_mean,
                       const std::vector<T>& running_var, NetMode mode,
                       std::vector<T>& out, std::vector<T>& xhat,
                       std::vector<T>& batch_mean, std::vector<T>& batch_var,
                       std::size_t b, int c, int len) {
    const std::size_t n = b * static_cast<std::size_t>(len);
    out.resize(in.size());
    xhat.resize(in.size());
    batch_mean.assign(static_cast<std::size_t>(c), T(0));
    batch_var.assign(static_cast<std::size_t>(c), T(0));
    for (int ch = 0; ch < c; ++ch) {
        T mean, var;
        if (mode == NetMode::Train) {
            T acc = T(0);
            for (std::size_t s = 0; s < b; ++s) {
                const T* row = in.data() + (s * static_cast<std::size_t>(c) +
                                            static_cast<std::size_t>(ch)) * len;
                for (int t = 0; t < len; ++t) acc += row[t];
            }
            mean = acc / static_cast<T>(n);
            T vacc = T(0);
            for (std::size_t s = 0; s < b; ++s) {
                const T* row = in.data() + (s * static_cast<std::size_t>(c) +
                                            static_cast<std::size_t>(ch)) * len;
                for (int t = 0; t < len; ++t) {
                    const T d = row[t] - mean;
                    vacc += d * d;
                }
            }
            var = vacc / static_cast<T>(n);
        } else {
            mean = running_mean[static_cast<std::size_t>(ch)];
            var = running_var[static_cast<std::size_t>(ch)];
        }
        batch_mean[static_cast<std::size_t>(ch)] = mean;
        batch_var[static_cast<std::size_t>(ch)] = var;
        const T inv_std = T(1) / std::sqrt(var + static_cast<T>(kBnEps));
        const T g = gamma[static_cast<std::size_t>(ch)];
        const T bt = beta[static_cast<std::size_t>(ch)];
        for (std::size_t s = 0; s < b; ++s) {
            const std::size_t base = (s * static_cast<std::size_t>(c) +
                                      static_cast<std::size_t>(ch)) * len;
            for (int t = 0; t < len; ++t) {
                const T xh = (in[base + static_cast<std::size_t>(t)] - mean) * inv_std;
                xhat[base + static_cast<std::size_t>(t)] = xh;
                out[base + static_cast<std::size_t>(t)] = g * xh + bt;
            }
        }
    }
}

// Train-mode batch norm backward through the batch statistics.
template <typename T>
void batchnorm_backward(const std::vector<T>& xhat, const std::vector<T>& gamma,
                        const std::vector<T>& batch_var, const std::vector<T>& dout,
                        std::vector<T>& din, std::vector<T>& dgamma,
                        std::vector<T>& dbeta, std::size_t b, int c, int len) {
    const std::size_t n = b * static_cast<std::size_t>(len);
    din.assign(xhat.size(), T(0));
    for (int ch = 0; ch < c; ++ch) {
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (std::size_t s = 0; s < b; ++s) {
            const std::size_t base = (s * static_cast<std::size_t>(c) +
                                      static_cast<std::size_t>(ch)) * len;
            for (int t = 0; t < len; ++t) {
                const T dy = dout[base + static_cast<std::size_t>(t)];
                sum_dy += dy;
                sum_dy_xhat += dy * xhat[base + static_cast<std::size_t>(t)];
            }
        }
        dgamma[static_cast<std::size_t>(ch)] += sum_dy_xhat;
        dbeta[static_cast<std::size_t>(ch)] += sum_dy;
        const T g = gamma[static_cast<std::size_t>(ch)];
        const T inv_std =
            T(1) / std::sqrt(batch_var[static_cast<std::size_t>(ch)] + static_cast<T>(kBnEps));
        const T scale = g * inv_std / static_cast<T>(n);
        for (std::size_t s = 0; s < b; ++s) {
            const std::size_t base = (s * static_cast<std::size_t>(c) +
                                      static_cast<std::size_t>(ch)) * len;
            for (int t = 0; t < len; ++t) {
                const std::size_t i = base + static_cast<std::size_t>(t);
                din[i] = scale * (static_cast<T>(n) * dout[i] - sum_dy -
                                  xhat[i] * sum_dy_xhat);
            }
        }
    }
}

}  // namespace net_detail

// Embedding lookup -> (Conv-BN-ReLU) x2 -> masked global max-pool over the
// first length positions -> linear latent -> two linear decoders.
template <typename T>
ForwardOutput<T> forward(const Parameters<T>& params, const NetworkConfig& cfg,
                         const std::vector<TokenSequence>& batch, NetMode mode) {
    cfg.validate();
    const std::size_t B = batch.size();
    if (B == 0) throw ConfigError("forward: empty batch");
    const int E = cfg.embed_dim, C = cfg.conv_channels, L = cfg.max_len,
              k = cfg.kernel_size, Ld = cfg.latent_dim, K = cfg.num_classes;

    ForwardOutput<T> out;
    auto& cache = out.cache;
    cache.valid = true;
    cache.mode = mode;
    cache.batch = B;
    cache.tokens.resize(B * static_cast<std::size_t>(L));
    cache.lengths.resize(B);

    // embedding lookup, [B, E, L]
    cache.emb.assign(B * static_cast<std::size_t>(E) * L, T(0));
    for (std::size_t s = 0; s < B; ++s) {
        if (static_cast<int>(batch[s].indices.size()) != L)
            throw ConfigError("forward: sequence length " +
                              std::to_string(batch[s].indices.size()) +
                              " != max_len " + std::to_string(L));
        cache.lengths[s] = batch[s].length;
        for (int t = 0; t < L; ++t) {
            const int tok = batch[s].indices[static_cast<std::size_t>(t)];
            if (tok < 0 || tok >= cfg.vocab_size)
                throw ConfigError("forward: token index " + std::to_string(tok) +
                                  " outside vocabulary of size " +
                                  std::to_string(cfg.vocab_size));
            cache.tokens[s * static_cast<std::size_t>(L) + static_cast<std::size_t>(t)] = tok;
            for (int e = 0; e < E; ++e)
                cache.emb[(s * static_cast<std::size_t>(E) + static_cast<std::size_t>(e)) * L +
                          static_cast<std::size_t>(t)] =
                    params.embedding[static_cast<std::size_t>(tok) * E +
                                     static_cast<std::size_t>(e)];
        }
    }

    net_detail::conv1d_forward(cache.emb, params.conv1_weight, params.conv1_bias,
                               cache.conv1_out, B, E, C, L, k);
    std::vector<T> bn1_out;
    net_detail::batchnorm_forward(cache.conv1_out, params.bn1_gamma, params.bn1_beta,
                                  params.bn1_running_mean, params.bn1_running_var, mode,
                                  bn1_out, cache.bn1_xhat, cache.bn1_mean, cache.bn1_var,
                                  B, C, L);
    cache.act1.resize(bn1_out.size());
    for (std::size_t i = 0; i < bn1_out.size(); ++i)
        cache.act1[i] = std::max(bn1_out[i], T(0));

    net_detail::conv1d_forward(cache.act1, params.conv2_weight, params.conv2_bias,
                               cache.conv2_out, B, C, C, L, k);
    std::vector<T> bn2_out;
    net_detail::batchnorm_forward(cache.conv2_out, params.bn2_gamma, params.bn2_beta,
                                  params.bn2_running_mean, params.bn2_running_var, mode,
                                  bn2_out, cache.bn2_xhat, cache.bn2_mean, cache.bn2_var,
                                  B, C, L);
    cache.act2.resize(bn2_out.size());
    for (std::size_t i = 0; i < bn2_out.size(); ++i)
        cache.act2[i] = std::max(bn2_out[i], T(0));

    // masked max-pool over positions [0, max(length, 1))
    cache.pooled.assign(B * static_cast<std::size_t>(C), T(0));
    cache.pool_argmax.assign(B * static_cast<std::size_t>(C), 0);
    for (std::size_t s = 0; s < B; ++s) {
        const int n = std::max(cache.lengths[s], 1);
        for (int ch = 0; ch < C; ++ch) {
            const T* row = cache.act2.data() +
                           (s * static_cast<std::size_t>(C) + static_cast<std::size_t>(ch)) * L;
            std::size_t best = 0;
            for (int t = 1; t < n; ++t)
                if (row[t] > row[best]) best = static_cast<std::size_t>(t);
            cache.pooled[s * static_cast<std::size_t>(C) + static_cast<std::size_t>(ch)] =
                row[best];
            cache.pool_argmax[s * static_cast<std::size_t>(C) + static_cast<std::size_t>(ch)] =
                best;
        }
    }

    auto linear = [&](const std::vector<T>& w, const std::vector<T>& bias,
                      const std::vector<T>& in, std::vector<T>& result, int rows,
                      int cols) {
        result.assign(B * static_cast<std::size_t>(rows), T(0));
        for (std::size_t s = 0; s < B; ++s)
            for (int r = 0; r < rows; ++r) {
                T acc = bias[static_cast<std::size_t>(r)];
                const T* w_row = w.data() + static_cast<std::size_t>(r) * cols;
                const T* in_row = in.data() + s * static_cast<std::size_t>(cols);
                for (int cc = 0; cc < cols; ++cc) acc += w_row[cc] * in_row[cc];
                result[s * static_cast<std::size_t>(rows) + static_cast<std::size_t>(r)] = acc;
            }
    };

    linear(params.latent_weight, params.latent_bias, cache.pooled, out.latent, Ld, C);
    cache.latent = out.latent;
    linear(params.cls_weight, params.cls_bias, out.latent, out.logits, K, Ld);
    linear(params.recon_weight, params.recon_bias, out.latent, out.reconstruction, E, Ld);

    for (T v : out.logits)
        if (!std::isfinite(v)) throw NumericError("forward produced non-finite logits");
    return out;
}

// Mean embedding of the first `length` positions; zero vector for all-PAD.
// Used as the reconstruction target, held constant within a training step.
template <typename T>
std::vector<T> reconstruction_target(const Parameters<T>& params,
                                     const NetworkConfig& cfg,
                                     const TokenSequence& seq) {
    const int E = cfg.embed_dim;
    std::vector<T> target(static_cast<std::size_t>(E), T(0));
    const int n = std::min(seq.length, cfg.max_len);
    if (n == 0) return target;
    for (int t = 0; t < n; ++t) {
        const int tok = seq.indices[static_cast<std::size_t>(t)];
        for (int e = 0; e < E; ++e)
            target[static_cast<std::size_t>(e)] +=
                params.embedding[static_cast<std::size_t>(tok) * E + static_cast<std::size_t>(e)];
    }
    for (auto& v : target) v /= static_cast<T>(n);
    return target;
}

template <typename T>
struct UpstreamGradients {
    std::vector<T> dlatent;  // [B, Ld] direct contribution (e.g. distill signals)
    std::vector<T> dlogits;  // [B, K]
    std::vector<T> drecon;   // [B, E]
};

template <typename T>
Gradients<T> zero_gradients(const Parameters<T>& params) {
    Gradients<T> g;
    g.embedding.assign(params.embedding.size(), T(0));
    g.conv1_weight.assign(params.conv1_weight.size(), T(0));
    g.conv1_bias.assign(params.conv1_bias.size(), T(0));
    g.bn1_gamma.assign(params.bn1_gamma.size(), T(0));
    g.bn1_beta.assign(params.bn1_beta.size(), T(0));
    g.conv2_weight.assign(params.conv2_weight.size(), T(0));
    g.conv2_bias.assign(params.conv2_bias.size(), T(0));
    g.bn2_gamma.assign(params.bn2_gamma.size(), T(0));
    g.bn2_beta.assign(params.bn2_beta.size(), T(0));
    g.latent_weight.assign(params.latent_weight.size(), T(0));
    g.latent_bias.assign(params.latent_bias.size(), T(0));
    g.cls_weight.assign(params.cls_weight.size(), T(0));
    g.cls_bias.assign(params.cls_bias.size(), T(0));
    g.recon_weight.assign(params.recon_weight.size(), T(0));
    g.recon_bias.assign(params.recon_bias.size(), T(0));
    return g;
}

template <typename T>
Gradients<T> backward(const Parameters<T>& params, const NetworkConfig& cfg,
                      const ForwardCache<T>& cache, const UpstreamGradients<T>& up) {
    if (!cache.valid) throw StateError("backward called without a cached forward");
    if (cache.mode != NetMode::Train)
        throw StateError("backward requires a train-mode forward");
    const std::size_t B = cache.batch;
    const int E = cfg.embed_dim, C = cfg.conv_channels, L = cfg.max_len,
              k = cfg.kernel_size, Ld = cfg.latent_dim, K = cfg.num_classes;
    if (up.dlogits.size() != B * static_cast<std::size_t>(K) ||
        up.drecon.size() != B * static_cast<std::size_t>(E) ||
        (!up.dlatent.empty() && up.dlatent.size() != B * static_cast<std::size_t>(Ld)))
        throw ShapeError("backward: upstream gradient shape mismatch");

    Gradients<T> g = zero_gradients(params);

    // decoders
    std::vector<T> dlatent(B * static_cast<std::size_t>(Ld), T(0));
    if (!up.dlatent.empty()) dlatent = up.dlatent;
    for (std::size_t s = 0; s < B; ++s) {
        const T* latent_s = cache.latent.data() + s * static_cast<std::size_t>(Ld);
        for (int r = 0; r < K; ++r) {
            const T dy = up.dlogits[s * static_cast<std::size_t>(K) + static_cast<std::size_t>(r)];
            if (dy == T(0)) continue;
            g.cls_bias[static_cast<std::size_t>(r)] += dy;
            T* gw = g.cls_weight.data() + static_cast<std::size_t>(r) * Ld;
            const T* w = params.cls_weight.data() + static_cast<std::size_t>(r) * Ld;
            for (int cc = 0; cc < Ld; ++cc) {
                gw[cc] += dy * latent_s[cc];
                dlatent[s * static_cast<std::size_t>(Ld) + static_cast<std::size_t>(cc)] +=
                    dy * w[cc];
            }
        }
        for (int r = 0; r < E; ++r) {
            const T dy = up.drecon[s * static_cast<std::size_t>(E) + static_cast<std::size_t>(r)];
            if (dy == T(0)) continue;
            g.recon_bias[static_cast<std::size_t>(r)] += dy;
            T* gw = g.recon_weight.data() + static_cast<std::size_t>(r) * Ld;
            const T* w = params.recon_weight.data() + static_cast<std::size_t>(r) * Ld;
            for (int cc = 0; cc < Ld; ++cc) {
                gw[cc] += dy * latent_s[cc];
                dlatent[s * static_cast<std::size_t>(Ld) + static_cast<std::size_t>(cc)] +=
                    dy * w[cc];
            }
        }
    }

    // latent projection
    std::vector<T> dpooled(B * static_cast<std::size_t>(C), T(0));
    for (std::size_t s = 0; s < B; ++s) {
        const T* pooled_s = cache.pooled.data() + s * static_cast<std::size_t>(C);
        for (int r = 0; r < Ld; ++r) {
            const T dy = dlatent[s * static_cast<std::size_t>(Ld) + static_cast<std::size_t>(r)];
            if (dy == T(0)) continue;
            g.latent_bias[static_cast<std::size_t>(r)] += dy;
            T* gw = g.latent_weight.data() + static_cast<std::size_t>(r) * C;
            const T* w = params.latent_weight.data() + static_cast<std::size_t>(r) * C;
            for (int cc = 0; cc < C; ++cc) {
                gw[cc] += dy * pooled_s[cc];
                dpooled[s * static_cast<std::size_t>(C) + static_cast<std::size_t>(cc)] +=
                    dy * w[cc];
            }
        }
    }

    // unpool to act2 positions
    std::vector<T> dact2(cache.act2.size(), T(0));
    for (std::size_t s = 0; s < B; ++s)
        for (int ch = 0; ch < C; ++ch) {
            const std::size_t i = s * static_cast<std::size_t>(C) + static_cast<std::size_t>(ch);
            dact2[(s * static_cast<std::size_t>(C) + static_cast<std::size_t>(ch)) * L +
                  cache.pool_argmax[i]] += dpooled[i];
        }

    // ReLU 2 (act2 = max(bn2_out, 0); bn2_out sign recoverable from act2)
    std::vector<T> dbn2(dact2.size());
    for (std::size_t i = 0; i < dact2.size(); ++i)
        dbn2[i] = cache.act2[i] > T(0) ? dact2[i] : T(0);

    std::vector<T> dconv2;
    net_detail::batchnorm_backward(cache.bn2_xhat, params.bn2_gamma, cache.bn2_var, dbn2,
                                   dconv2, g.bn2_gamma, g.bn2_beta, B, C, L);

    std::vector<T> dact1;
    net_detail::conv1d_backward(cache.act1, params.conv2_weight, dconv2, dact1,
                                g.conv2_weight, g.conv2_bias, B, C, C, L, k);

    std::vector<T> dbn1(dact1.size());
    for (std::size_t i = 0; i < dact1.size(); ++i)
        dbn1[i] = cache.act1[i] > T(0) ? dact1[i] : T(0);

    std::vector<T> dconv1;
    net_detail::batchnorm_backward(cache.bn1_xhat, params.bn1_gamma, cache.bn1_var, dbn1,
                                   dconv1, g.bn1_gamma, g.bn1_beta, B, C, L);

    std::vector<T> demb;
    net_detail::conv1d_backward(cache.emb, params.conv1_weight, dconv1, demb,
                                g.conv1_weight, g.conv1_bias, B, E, C, L, k);

    // scatter into the embedding table
    for (std::size_t s = 0; s < B; ++s)
        for (int t = 0; t < L; ++t) {
            const int tok =
                cache.tokens[s * static_cast<std::size_t>(L) + static_cast<std::size_t>(t)];
            for (int e = 0; e < E; ++e)
                g.embedding[static_cast<std::size_t>(tok) * E + static_cast<std::size_t>(e)] +=
                    demb[(s * static_cast<std::size_t>(E) + static_cast<std::size_t>(e)) * L +
                         static_cast<std::size_t>(t)];
        }
    return g;
}

// p <- p - lr * g; batch-norm running stats updated from the cached batch
// statistics with momentum 0.1.
template <typename T>
void sgd_step(Parameters<T>& params, const Gradients<T>& grads, T lr,
              const ForwardCache<T>* cache = nullptr) {
    auto apply = [&](const char* name, std::vector<T>& p, const std::vector<T>& g) {
        if (p.size() != g.size())
            throw ShapeError(std::string("sgd_step: shape mismatch for ") + name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw DivergenceError(std::string("non-finite gradient in ") + name);
            p[i] -= lr * g[i];
        }
    };
    apply("embedding", params.embedding, grads.embedding);
    apply("conv1.weight", params.conv1_weight, grads.conv1_weight);
    apply("conv1.bias", params.conv1_bias, grads.conv1_bias);
    apply("bn1.gamma", params.bn1_gamma, grads.bn1_gamma);
    apply("bn1.beta", params.bn1_beta, grads.bn1_beta);
    apply("conv2.weight", params.conv2_weight, grads.conv2_weight);
    apply("conv2.bias", params.conv2_bias, grads.conv2_bias);
    apply("bn2.gamma", params.bn2_gamma, grads.bn2_gamma);
    apply("bn2.beta", params.bn2_beta, grads.bn2_beta);
    apply("latent.weight", params.latent_weight, grads.latent_weight);
    apply("latent.bias", params.latent_bias, grads.latent_bias);
    apply("cls.weight", params.cls_weight, grads.cls_weight);
    apply("cls.bias", params.cls_bias, grads.cls_bias);
    apply("recon.weight", params.recon_weight, grads.recon_weight);
    apply("recon.bias", params.recon_bias, grads.recon_bias);

    if (cache && cache->valid && cache->mode == NetMode::Train) {
        const T m = static_cast<T>(kBnMomentum);
        for (std::size_t i = 0; i < params.bn1_running_mean.size(); ++i) {
            params.bn1_running_mean[i] =
                (T(1) - m) * params.bn1_running_mean[i] + m * cache->bn1_mean[i];
            params.bn1_running_var[i] =
                (T(1) - m) * params.bn1_running_var[i] + m * cache->bn1_var[i];
        }
        for (std::size_t i = 0; i < params.bn2_running_mean.size(); ++i) {
            params.bn2_running_mean[i] =
                (T(1) - m) * params.bn2_running_mean[i] + m * cache->bn2_mean[i];
            params.bn2_running_var[i] =
                (T(1) - m) * params.bn2_running_var[i] + m * cache->bn2_var[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: LGN1 container, float32 blobs in manifest order.

inline void save_checkpoint(Parameters<float>& params, const NetworkConfig& cfg,
                            const std::string& path,
                            const nlohmann::json& extra = nlohmann::json::object()) {
    Container c;
    c.kind = "checkpoint";
    c.config = cfg.to_json();
    for (auto& [key, value] : extra.items()) c.config[key] = value;
    auto add = [&](const std::string& name, const std::vector<float>& data) {
        c.add_f32(name, {static_cast<std::int64_t>(data.size())}, data);
    };
    params.for_each_trainable([&](const char* name, std::vector<float>& v) { add(name, v); });
    params.for_each_state([&](const char* name, std::vector<float>& v) { add(name, v); });
    c.save(path);
}

inline std::pair<Parameters<float>, NetworkConfig> load_checkpoint(
    const std::string& path, nlohmann::json* extra = nullptr) {
    Container c = Container::load(path);
    if (c.kind != "checkpoint") throw FormatError("not a checkpoint file: " + path);
    NetworkConfig cfg = NetworkConfig::from_json(c.config);
    if (extra) *extra = c.config;
    Parameters<float> params = init_parameters<float>(cfg, 0);
    auto fill = [&](const char* name, std::vector<float>& v) {
        const NamedArray& arr = c.get(name);
        if (arr.f32.size() != v.size())
            throw ShapeError("checkpoint array '" + std::string(name) +
                             "' has wrong size for its config");
        v = arr.f32;
    };
    params.for_each_trainable(fill);
    params.for_each_state(fill);
    return {std::move(params), cfg};
}

}  // namespace latentg
