#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "latentg/losses.hpp"
#include "latentg/net.hpp"

using namespace latentg;

namespace {

NetworkConfig small_config() {
    NetworkConfig cfg;
    cfg.vocab_size = 20;
    cfg.embed_dim = 6;
    cfg.conv_channels = 5;
    cfg.kernel_size = 3;
    cfg.latent_dim = 4;
    cfg.num_classes = 3;
    cfg.max_len = 8;
    return cfg;
}

TokenSequence random_seq(const NetworkConfig& cfg, Rng& rng, int length = -1) {
    TokenSequence s;
    if (length < 0) length = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(cfg.max_len - 1)));
    s.length = length;
    s.indices.assign(static_cast<std::size_t>(cfg.max_len), Vocabulary::kPad);
    for (int t = 0; t < length; ++t)
        s.indices[static_cast<std::size_t>(t)] =
            2 + static_cast<int>(rng.index(static_cast<std::size_t>(cfg.vocab_size - 2)));
    return s;
}

}  // namespace

TEST_CASE("config validation") {
    auto cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.num_classes = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.vocab_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(small_config().feature_dim() == 7);
}

TEST_CASE("init is deterministic and follows the documented scheme") {
    auto cfg = small_config();
    auto a = init_parameters<double>(cfg, 3);
    auto b = init_parameters<double>(cfg, 3);
    CHECK(a.embedding == b.embedding);
    CHECK(a.conv1_weight == b.conv1_weight);
    auto c = init_parameters<double>(cfg, 4);
    CHECK(a.embedding != c.embedding);
    for (double w : a.embedding) {
        CHECK(w >= -0.05);
        CHECK(w <= 0.05);
    }
    for (double w : a.conv1_bias) CHECK(w == 0.0);
    for (double w : a.cls_bias) CHECK(w == 0.0);
    for (double w : a.bn1_gamma) CHECK(w == 1.0);
    for (double w : a.bn1_beta) CHECK(w == 0.0);
    for (double w : a.bn2_running_var) CHECK(w == 1.0);
}

TEST_CASE("forward output shapes") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 1);
    Rng rng(2);
    std::vector<TokenSequence> batch = {random_seq(cfg, rng), random_seq(cfg, rng),
                                        random_seq(cfg, rng)};
    auto out = forward(params, cfg, batch, NetMode::Train);
    CHECK(out.latent.size() == 3u * 4);
    CHECK(out.logits.size() == 3u * 3);
    CHECK(out.reconstruction.size() == 3u * 6);
    for (double v : out.logits) CHECK(std::isfinite(v));
}

TEST_CASE("forward is total on all-PAD sequences") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 1);
    TokenSequence pad;
    pad.length = 0;
    pad.indices.assign(static_cast<std::size_t>(cfg.max_len), Vocabulary::kPad);
    auto out = forward(params, cfg, {pad}, NetMode::Eval);
    for (double v : out.logits) CHECK(std::isfinite(v));
    for (double v : out.latent) CHECK(std::isfinite(v));
}

TEST_CASE("forward input validation") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 1);
    Rng rng(5);
    auto seq = random_seq(cfg, rng);
    seq.indices[0] = cfg.vocab_size;  // out of range
    CHECK_THROWS_AS(forward(params, cfg, {seq}, NetMode::Eval), ConfigError);
    auto short_seq = random_seq(cfg, rng);
    short_seq.indices.pop_back();
    CHECK_THROWS_AS(forward(params, cfg, {short_seq}, NetMode::Eval), ConfigError);
    CHECK_THROWS_AS(forward(params, cfg, {}, NetMode::Eval), ConfigError);
}

TEST_CASE("zeroed classifier head yields uniform class probabilities") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 1);
    std::fill(params.cls_weight.begin(), params.cls_weight.end(), 0.0);
    std::fill(params.cls_bias.begin(), params.cls_bias.end(), 0.0);
    Rng rng(9);
    auto out = forward(params, cfg, {random_seq(cfg, rng)}, NetMode::Eval);
    auto probs = softmax(out.logits);
    for (double p : probs) CHECK(p == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("eval-mode output is independent of batch companions") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 7);
    Rng rng(11);
    auto a = random_seq(cfg, rng);
    auto b = random_seq(cfg, rng);
    auto solo = forward(params, cfg, {a}, NetMode::Eval);
    auto joint = forward(params, cfg, {a, b}, NetMode::Eval);
    for (std::size_t i = 0; i < solo.logits.size(); ++i)
        CHECK(std::abs(solo.logits[i] - joint.logits[i]) < 1e-9);
    for (std::size_t i = 0; i < solo.latent.size(); ++i)
        CHECK(std::abs(solo.latent[i] - joint.latent[i]) < 1e-9);
}

TEST_CASE("eval-mode outputs permute with the batch") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 7);
    Rng rng(13);
    std::vector<TokenSequence> batch = {random_seq(cfg, rng), random_seq(cfg, rng),
                                        random_seq(cfg, rng)};
    auto fwd = forward(params, cfg, batch, NetMode::Eval);
    std::vector<TokenSequence> reversed(batch.rbegin(), batch.rend());
    auto rev = forward(params, cfg, reversed, NetMode::Eval);
    const std::size_t K = 3;
    for (std::size_t s = 0; s < batch.size(); ++s)
        for (std::size_t c = 0; c < K; ++c)
            CHECK(std::abs(fwd.logits[s * K + c] -
                           rev.logits[(batch.size() - 1 - s) * K + c]) < 1e-9);
}

TEST_CASE("reconstruction target is the mean embedding of valid positions") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 15);
    TokenSequence one;
    one.length = 1;
    one.indices.assign(static_cast<std::size_t>(cfg.max_len), 0);
    one.indices[0] = 5;
    auto t1 = reconstruction_target(params, cfg, one);
    for (int e = 0; e < cfg.embed_dim; ++e)
        CHECK(t1[static_cast<std::size_t>(e)] ==
              params.embedding[5 * static_cast<std::size_t>(cfg.embed_dim) +
                               static_cast<std::size_t>(e)]);

    TokenSequence two = one;
    two.length = 2;
    two.indices[1] = 9;
    auto t2 = reconstruction_target(params, cfg, two);
    for (int e = 0; e < cfg.embed_dim; ++e) {
        const double expect =
            0.5 * (params.embedding[5 * static_cast<std::size_t>(cfg.embed_dim) +
                                    static_cast<std::size_t>(e)] +
                   params.embedding[9 * static_cast<std::size_t>(cfg.embed_dim) +
                                    static_cast<std::size_t>(e)]);
        CHECK(t2[static_cast<std::size_t>(e)] == Catch::Approx(expect).margin(1e-12));
    }

    TokenSequence pad;
    pad.length = 0;
    pad.indices.assign(static_cast<std::size_t>(cfg.max_len), 0);
    auto t0 = reconstruction_target(params, cfg, pad);
    for (double v : t0) CHECK(v == 0.0);
}

TEST_CASE("backward demands a valid train-mode cache") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 1);
    ForwardCache<double> empty;
    UpstreamGradients<double> up;
    CHECK_THROWS_AS(backward(params, cfg, empty, up), StateError);

    Rng rng(3);
    auto out = forward(params, cfg, {random_seq(cfg, rng)}, NetMode::Eval);
    up.dlogits.assign(3, 0.0);
    up.drecon.assign(6, 0.0);
    CHECK_THROWS_AS(backward(params, cfg, out.cache, up), StateError);

    auto train_out = forward(params, cfg, {random_seq(cfg, rng)}, NetMode::Train);
    up.dlogits.assign(2, 0.0);  // wrong shape
    CHECK_THROWS_AS(backward(params, cfg, train_out.cache, up), ShapeError);
}

TEST_CASE("zero upstream gradients give zero parameter gradients") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 1);
    Rng rng(3);
    auto out = forward(params, cfg, {random_seq(cfg, rng)}, NetMode::Train);
    UpstreamGradients<double> up;
    up.dlogits.assign(3, 0.0);
    up.drecon.assign(6, 0.0);
    auto g = backward(params, cfg, out.cache, up);
    g.for_each_trainable([](const char*, std::vector<double>& v) {
        for (double x : v) CHECK(x == 0.0);
    });
}

TEST_CASE("backward matches finite differences on every layer") {
    auto cfg = small_config();
    for (std::uint64_t seed : {21u, 22u}) {
        auto params = init_parameters<double>(cfg, seed);
        Rng rng(seed + 100);
        std::vector<TokenSequence> batch = {random_seq(cfg, rng), random_seq(cfg, rng),
                                            random_seq(cfg, rng)};
        std::vector<int> targets = {0, 2, 1};
        const std::size_t B = batch.size(), K = 3, E = 6;

        std::vector<double> frozen(B * E);
        for (std::size_t i = 0; i < B; ++i) {
            auto t = reconstruction_target(params, cfg, batch[i]);
            std::copy(t.begin(), t.end(), frozen.begin() + static_cast<long>(i * E));
        }
        auto loss_of = [&](const Parameters<double>& p) {
            auto out = forward(p, cfg, batch, NetMode::Train);
            auto base = base_loss_batch(BaseLoss::CE, out.logits, targets, K, LossConfig{});
            auto m = mse_batch(out.reconstruction, frozen, B, E);
            return base.value + 75.0 * m.value;
        };

        auto out = forward(params, cfg, batch, NetMode::Train);
        auto base = base_loss_batch(BaseLoss::CE, out.logits, targets, K, LossConfig{});
        auto m = mse_batch(out.reconstruction, frozen, B, E);
        UpstreamGradients<double> up;
        up.dlogits = base.grad_logits;
        up.drecon.resize(m.grad_pred.size());
        for (std::size_t i = 0; i < m.grad_pred.size(); ++i)
            up.drecon[i] = 75.0 * m.grad_pred[i];
        auto grads = backward(params, cfg, out.cache, up);

        const double eps = 1e-6;
        params.for_each_trainable([&](const char* name, std::vector<double>& w) {
            std::vector<double>* g = nullptr;
            grads.for_each_trainable([&](const char* gn, std::vector<double>& gv) {
                if (std::string(gn) == name) g = &gv;
            });
            REQUIRE(g != nullptr);
            const std::size_t stride = std::max<std::size_t>(1, w.size() / 5);
            for (std::size_t i = 0; i < w.size(); i += stride) {
                const double orig = w[i];
                w[i] = orig + eps;
                const double lp = loss_of(params);
                w[i] = orig - eps;
                const double lm = loss_of(params);
                w[i] = orig;
                const double num = (lp - lm) / (2 * eps);
                const double ana = (*g)[i];
                const double rel =
                    std::abs(num - ana) / std::max({1.0, std::abs(num), std::abs(ana)});
                INFO(name << "[" << i << "] numeric " << num << " analytic " << ana);
                CHECK(rel < 1e-5);
            }
        });
    }
}

TEST_CASE("sgd step arithmetic and running-stat update") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 1);
    auto grads = zero_gradients(params);
    params.cls_weight[0] = 1.0;
    grads.cls_weight[0] = 0.5;
    sgd_step(params, grads, 0.01);
    CHECK(params.cls_weight[0] == Catch::Approx(0.995).margin(1e-15));

    auto before = params;
    sgd_step(params, zero_gradients(params), 0.5);
    CHECK(params.cls_weight == before.cls_weight);
    CHECK(params.embedding == before.embedding);

    // running stats move toward the cached batch stats with momentum 0.1
    Rng rng(4);
    auto out = forward(params, cfg, {random_seq(cfg, rng), random_seq(cfg, rng)},
                       NetMode::Train);
    const double rm0 = params.bn1_running_mean[0];
    sgd_step(params, zero_gradients(params), 0.0, &out.cache);
    CHECK(params.bn1_running_mean[0] ==
          Catch::Approx(0.9 * rm0 + 0.1 * out.cache.bn1_mean[0]).margin(1e-12));
}

TEST_CASE("sgd rejects non-finite gradients naming the parameter") {
    auto cfg = small_config();
    auto params = init_parameters<double>(cfg, 1);
    auto grads = zero_gradients(params);
    grads.latent_weight[2] = std::nan("");
    try {
        sgd_step(params, grads, 0.01);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("latent.weight") != std::string::npos);
    }
}

TEST_CASE("checkpoint round-trips bitwise") {
    auto cfg = small_config();
    auto params = init_parameters<float>(cfg, 77);
    const std::string path = "/tmp/latentg_test_ckpt.bin";
    nlohmann::json extra = {{"role", "teacher"}, {"config_digest", "abc"}};
    save_checkpoint(params, cfg, path, extra);
    nlohmann::json loaded_extra;
    auto [loaded, loaded_cfg] = load_checkpoint(path, &loaded_extra);
    CHECK(loaded_cfg.vocab_size == cfg.vocab_size);
    CHECK(loaded_cfg.latent_dim == cfg.latent_dim);
    CHECK(loaded_extra.at("role") == "teacher");
    CHECK(loaded.embedding == params.embedding);
    CHECK(loaded.conv2_weight == params.conv2_weight);
    CHECK(loaded.bn1_running_var == params.bn1_running_var);
}

TEST_CASE("checkpoint rejects truncation and tampered shapes") {
    auto cfg = small_config();
    auto params = init_parameters<float>(cfg, 77);
    const std::string path = "/tmp/latentg_test_ckpt2.bin";
    save_checkpoint(params, cfg, path);

    // truncate
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    in.close();
    const std::string trunc_path = "/tmp/latentg_test_ckpt_trunc.bin";
    {
        std::ofstream out(trunc_path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(trunc_path), FormatError);

    // tamper with the embedded vocab size so blobs no longer match the config
    Container c = Container::load(path);
    c.config["vocab_size"] = cfg.vocab_size + 5;
    const std::string tampered = "/tmp/latentg_test_ckpt_tamper.bin";
    c.save(tampered);
    CHECK_THROWS_AS(load_checkpoint(tampered), ShapeError);

    CHECK_THROWS_AS(load_checkpoint("/tmp/latentg_no_such_ckpt.bin"), FormatError);
}
