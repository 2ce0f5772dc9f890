#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "latentg/common.hpp"
#include "latentg/corpus.hpp"
#include "latentg/distill.hpp"
#include "latentg/losses.hpp"
#include "latentg/net.hpp"
#include "latentg/synth.hpp"
#include "latentg/trainer.hpp"

namespace latentg {

// Flat typed key-value config with section prefixes (`loss.alpha = 0.56`).
// Every key has a default; unknown keys are rejected; flags override file
// values via set(). The digest over the effective key=value map is embedded
// in output artifacts.
class RunConfig {
public:
    RunConfig() { values_ = defaults(); }

    static RunConfig from_file(const std::string& path) {
        RunConfig cfg;
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file: " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#') continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) +
                                  ": expected 'section.key = value'");
            cfg.set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        it->second = value;
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    std::int64_t get_int(const std::string& key) const {
        try {
            std::size_t pos = 0;
            std::int64_t v = std::stoll(get(key), &pos);
            if (pos != get(key).size()) throw std::invalid_argument(key);
            return v;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' is not an integer: " + get(key));
        }
    }

    double get_double(const std::string& key) const {
        try {
            std::size_t pos = 0;
            double v = std::stod(get(key), &pos);
            if (pos != get(key).size()) throw std::invalid_argument(key);
            return v;
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' is not a number: " + get(key));
        }
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("config key '" + key + "' is not a boolean: " + v);
    }

    std::uint64_t seed() const {
        return static_cast<std::uint64_t>(get_int("global.seed"));
    }

    // FNV-1a over the sorted effective key=value lines.
    std::uint64_t digest() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& [k, v] : values_) {
            h = fnv1a(k.data(), k.size(), h);
            h = fnv1a("=", 1, h);
            h = fnv1a(v.data(), v.size(), h);
            h = fnv1a("\n", 1, h);
        }
        return h;
    }

    std::string digest_hex() const { return hex64(digest()); }

    void write_effective(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw FormatError("cannot write effective config: " + path);
        out << "# effective configuration, digest " << digest_hex() << '\n';
        for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    }

    // ---- typed views over the flat map ------------------------------------

    CsvSchema csv_schema() const {
        CsvSchema s;
        s.id_column = get("corpus.id_column");
        s.text_column = get("corpus.text_column");
        s.label_column = get("corpus.label_column");
        return s;
    }

    SplitSpec split_spec() const {
        SplitSpec s;
        s.test_fraction = get_double("split.test_fraction");
        s.seed = seed();
        return s;
    }

    NetworkConfig network(int vocab_size, int num_classes) const {
        NetworkConfig n;
        n.vocab_size = vocab_size;
        n.num_classes = num_classes;
        n.embed_dim = static_cast<int>(get_int("net.embed_dim"));
        n.conv_channels = static_cast<int>(get_int("net.conv_channels"));
        n.kernel_size = static_cast<int>(get_int("net.kernel_size"));
        n.latent_dim = static_cast<int>(get_int("net.latent_dim"));
        n.max_len = static_cast<int>(get_int("vocab.max_len"));
        n.validate();
        return n;
    }

    LossConfig loss() const {
        LossConfig l;
        l.base_loss = base_loss_from_string(get("loss.base"));
        l.alpha = get_double("loss.alpha");
        l.beta = get_double("loss.beta");
        l.gamma = get_double("loss.gamma");
        l.focal_gamma = get_double("loss.focal_gamma");
        l.tversky_alpha = get_double("loss.tversky_alpha");
        l.tversky_beta = get_double("loss.tversky_beta");
        l.per_sample_composition = get_bool("loss.per_sample_composition");
        return l;
    }

    DistillConfig distill() const {
        DistillConfig d;
        d.p_mode = p_mode_from_string(get("distill.p_mode"));
        d.dist_mode = dist_mode_from_string(get("distill.dist_mode"));
        d.dist_normalize = get_bool("distill.dist_normalize");
        d.stop_gradient_signals = get_bool("distill.stop_gradient_signals");
        return d;
    }

    int gmm_components(int num_classes) const {
        const auto k = get_int("distill.k_components");
        return k == 0 ? num_classes : static_cast<int>(k);
    }

    TrainOptions teacher_options() const {
        TrainOptions o;
        o.lr = get_double("trainer.lr");
        o.batch_size = static_cast<int>(get_int("trainer.batch_size"));
        o.epochs = static_cast<int>(get_int("trainer.teacher_epochs"));
        o.seed = seed();
        return o;
    }

    TrainOptions student_options() const {
        TrainOptions o = teacher_options();
        o.epochs = static_cast<int>(get_int("trainer.student_epochs"));
        o.log_signals = get_bool("trainer.log_signals");
        return o;
    }

    SynthOptions synth() const {
        SynthOptions o;
        o.samples_per_class = static_cast<int>(get_int("synth.samples_per_class"));
        o.num_classes = static_cast<int>(get_int("synth.num_classes"));
        o.vocab_tokens = static_cast<int>(get_int("synth.vocab_tokens"));
        o.min_len = static_cast<int>(get_int("synth.min_len"));
        o.max_len = static_cast<int>(get_int("synth.max_len"));
        o.class_token_prob = get_double("synth.class_token_prob");
        o.seed = seed();
        return o;
    }

    const std::map<std::string, std::string>& items() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static std::map<std::string, std::string> defaults() {
        return {
            {"global.seed", "0"},
            {"corpus.id_column", "id"},
            {"corpus.text_column", "statement"},
            {"corpus.label_column", "status"},
            {"corpus.stopwords", ""},  // optional stoplist file; empty = none
            {"split.test_fraction", "0.2"},
            {"vocab.min_freq", "1"},
            {"vocab.max_len", "64"},
            {"net.embed_dim", "100"},
            {"net.conv_channels", "128"},
            {"net.kernel_size", "3"},
            {"net.latent_dim", "64"},
            {"loss.base", "ce"},
            {"loss.alpha", "0.56"},
            {"loss.beta", "0.44"},
            {"loss.gamma", "75"},
            {"loss.focal_gamma", "2"},
            {"loss.tversky_alpha", "0.3"},
            {"loss.tversky_beta", "0.7"},
            {"loss.per_sample_composition", "false"},
            {"distill.p_mode", "true_class_posterior"},
            {"distill.dist_mode", "feature"},
            {"distill.dist_normalize", "false"},
            {"distill.stop_gradient_signals", "false"},
            {"distill.k_components", "0"},  // 0 = one component per class
            {"trainer.lr", "0.01"},
            {"trainer.batch_size", "32"},
            {"trainer.teacher_epochs", "300"},
            {"trainer.student_epochs", "500"},
            {"trainer.log_signals", "false"},
            {"kfold.k", "5"},
            {"baseline.lr", "0.5"},
            {"baseline.l2", "1e-4"},
            {"baseline.epochs", "50"},
            {"baseline.grid_search", "false"},
            {"synth.samples_per_class", "100"},
            {"synth.num_classes", "7"},
            {"synth.vocab_tokens", "200"},
            {"synth.min_len", "3"},
            {"synth.max_len", "30"},
            {"synth.class_token_prob", "0.7"},
        };
    }

    std::map<std::string, std::string> values_;
};

}  // namespace latentg
