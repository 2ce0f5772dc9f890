#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latentg/common.hpp"
#include "latentg/corpus.hpp"

namespace latentg {

// Deterministic synthetic classification corpus. A 200-token vocabulary is
// partitioned so each class owns a block of discriminative tokens; documents
// mix tokens from their class block with shared background tokens. Same seed
// -> byte-identical output.
struct SynthOptions {
    int samples_per_class = 100;
    int num_classes = 7;
    int vocab_tokens = 200;
    int min_len = 3;
    int max_len = 30;
    double class_token_prob = 0.7;  // chance each position draws from the class block
    std::uint64_t seed = 0;
};

inline std::string synth_token(int index) {
    std::string s = std::to_string(index);
    while (s.size() < 3) s.insert(s.begin(), '0');
    return "tok" + s;
}

inline Corpus synth_corpus(const SynthOptions& opts,
                           const LabelSet& labels = LabelSet::default_mental_health()) {
    if (opts.num_classes < 2 || opts.num_classes > labels.size())
        throw ConfigError("synth_corpus: num_classes must be in [2, label set size]");
    if (opts.samples_per_class < 1) throw ConfigError("synth_corpus: samples_per_class must be >= 1");
    if (opts.min_len < 1 || opts.max_len < opts.min_len)
        throw ConfigError("synth_corpus: bad length range");
    const int block = opts.vocab_tokens / (opts.num_classes + 1);
    if (block < 2) throw ConfigError("synth_corpus: vocab too small for class count");
    // background tokens live in the final block
    const int background_start = opts.num_classes * block;
    const int background_count = opts.vocab_tokens - background_start;

    Rng rng(opts.seed);
    Corpus corpus(labels);
    std::int64_t next_id = 1;
    for (int c = 0; c < opts.num_classes; ++c) {
        for (int s = 0; s < opts.samples_per_class; ++s) {
            const int len = opts.min_len +
                            static_cast<int>(rng.index(static_cast<std::size_t>(
                                opts.max_len - opts.min_len + 1)));
            std::string text;
            for (int t = 0; t < len; ++t) {
                int tok;
                if (rng.uniform() < opts.class_token_prob) {
                    tok = c * block + static_cast<int>(rng.index(static_cast<std::size_t>(block)));
                } else {
                    tok = background_start +
                          static_cast<int>(rng.index(static_cast<std::size_t>(background_count)));
                }
                if (!text.empty()) text += ' ';
                text += synth_token(tok);
            }
            Sample sample;
            sample.id = next_id++;
            sample.raw_text = text;
            sample.clean_text = clean_text(text);
            sample.label = c;
            corpus.add(std::move(sample));
        }
    }
    return corpus;
}

}  // namespace latentg
