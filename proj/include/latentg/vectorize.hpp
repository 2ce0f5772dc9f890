#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "latentg/common.hpp"
#include "latentg/corpus.hpp"
#include "latentg/csv.hpp"

namespace latentg {

inline std::vector<std::string> tokenize(const std::string& cleaned) {
    std::vector<std::string> tokens;
    std::size_t start = 0;
    while (start < cleaned.size()) {
        std::size_t end = cleaned.find(' ', start);
        if (end == std::string::npos) end = cleaned.size();
        if (end > start) tokens.push_back(cleaned.substr(start, end - start));
        start = end + 1;
    }
    return tokens;
}

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocabulary() : index_to_token_{"<pad>", "<unk>"} {}

    // Tokens with frequency >= min_freq, ordered by (-frequency, lexicographic).
    static Vocabulary build(const Corpus& train, int min_freq) {
        if (train.empty()) throw VocabError("cannot build vocabulary from empty corpus");
        std::unordered_map<std::string, std::int64_t> freq;
        for (const auto& s : train.samples())
            for (const auto& tok : tokenize(s.clean_text)) ++freq[tok];
        std::vector<std::pair<std::string, std::int64_t>> entries;
        for (auto& [tok, f] : freq)
            if (f >= min_freq) entries.emplace_back(tok, f);
        if (entries.empty())
            throw VocabError("vocabulary is empty after min_freq=" + std::to_string(min_freq));
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        Vocabulary v;
        for (auto& [tok, f] : entries) {
            (void)f;
            v.token_to_index_.emplace(tok, static_cast<int>(v.index_to_token_.size()));
            v.index_to_token_.push_back(tok);
        }
        return v;
    }

    int size() const { return static_cast<int>(index_to_token_.size()); }

    int lookup(const std::string& token) const {
        auto it = token_to_index_.find(token);
        return it == token_to_index_.end() ? kUnk : it->second;
    }

    const std::string& token(int index) const {
        return index_to_token_.at(static_cast<std::size_t>(index));
    }

    std::uint64_t digest() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& tok : index_to_token_) {
            h = fnv1a(tok.data(), tok.size(), h);
            h = fnv1a("\n", 1, h);
        }
        return h;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw FormatError("cannot write vocabulary: " + path);
        for (std::size_t i = 2; i < index_to_token_.size(); ++i)
            out << index_to_token_[i] << '\n';
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot read vocabulary: " + path);
        Vocabulary v;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            v.token_to_index_.emplace(line, static_cast<int>(v.index_to_token_.size()));
            v.index_to_token_.push_back(line);
        }
        return v;
    }

private:
    std::unordered_map<std::string, int> token_to_index_;
    std::vector<std::string> index_to_token_;
};

struct TokenSequence {
    std::int64_t sample_id = 0;
    std::vector<int> indices;  // padded/truncated to max_len
    int length = 0;            // pre-padding length, capped at max_len
};

inline TokenSequence encode(const std::string& cleaned, const Vocabulary& vocab,
                            int max_len, std::int64_t sample_id = 0) {
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
    TokenSequence seq;
    seq.sample_id = sample_id;
    seq.indices.assign(static_cast<std::size_t>(max_len), Vocabulary::kPad);
    auto tokens = tokenize(cleaned);
    seq.length = static_cast<int>(std::min<std::size_t>(tokens.size(),
                                                        static_cast<std::size_t>(max_len)));
    for (int i = 0; i < seq.length; ++i)
        seq.indices[static_cast<std::size_t>(i)] = vocab.lookup(tokens[static_cast<std::size_t>(i)]);
    return seq;
}

inline std::string decode(const TokenSequence& seq, const Vocabulary& vocab) {
    std::string out;
    for (int i = 0; i < seq.length; ++i) {
        if (i) out.push_back(' ');
        out += vocab.token(seq.indices[static_cast<std::size_t>(i)]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// TF-IDF

struct TfidfVector {
    std::int64_t doc_id = 0;
    std::vector<std::pair<int, double>> entries;  // (term index, weight), sorted
};

class TfidfTable {
public:
    // idf(t) = ln((1+N)/(1+df(t))) + 1
    static TfidfTable fit(const Corpus& train) {
        if (train.empty()) throw VocabError("cannot fit tf-idf on empty corpus");
        TfidfTable table;
        std::unordered_map<std::string, std::int64_t> df;
        for (const auto& s : train.samples()) {
            auto tokens = tokenize(s.clean_text);
            std::sort(tokens.begin(), tokens.end());
            tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
            for (const auto& tok : tokens) ++df[tok];
        }
        std::vector<std::string> terms;
        terms.reserve(df.size());
        for (const auto& [tok, d] : df) terms.push_back(tok);
        std::sort(terms.begin(), terms.end());
        const double n_docs = static_cast<double>(train.size());
        for (const auto& tok : terms) {
            const double idf =
                std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[tok]))) + 1.0;
            table.term_index_.emplace(tok, static_cast<int>(table.idf_.size()));
            table.terms_.push_back(tok);
            table.idf_.push_back(idf);
        }
        return table;
    }

    int num_terms() const { return static_cast<int>(idf_.size()); }
    double idf(int term) const { return idf_.at(static_cast<std::size_t>(term)); }
    const std::string& term(int index) const { return terms_.at(static_cast<std::size_t>(index)); }

    int term_index(const std::string& token) const {
        auto it = term_index_.find(token);
        return it == term_index_.end() ? -1 : it->second;
    }

    // count * idf, L2-normalized; unseen terms absent; all-unseen -> zero vector
    TfidfVector transform(const std::string& cleaned, std::int64_t doc_id = 0) const {
        TfidfVector vec;
        vec.doc_id = doc_id;
        std::map<int, double> counts;
        for (const auto& tok : tokenize(cleaned)) {
            int idx = term_index(tok);
            if (idx >= 0) counts[idx] += 1.0;
        }
        double norm_sq = 0.0;
        for (auto& [idx, count] : counts) {
            const double w = count * idf_[static_cast<std::size_t>(idx)];
            vec.entries.emplace_back(idx, w);
            norm_sq += w * w;
        }
        if (norm_sq > 0.0) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (auto& [idx, w] : vec.entries) w *= inv;
        }
        return vec;
    }

    // Raw term counts in this table's index space (for multinomial models).
    std::vector<std::pair<int, double>> counts(const std::string& cleaned) const {
        std::map<int, double> acc;
        for (const auto& tok : tokenize(cleaned)) {
            int idx = term_index(tok);
            if (idx >= 0) acc[idx] += 1.0;
        }
        return {acc.begin(), acc.end()};
    }

private:
    std::unordered_map<std::string, int> term_index_;
    std::vector<std::string> terms_;
    std::vector<double> idf_;
};

inline void save_tfidf_csv(const std::vector<TfidfVector>& vectors,
                           const std::string& path) {
    CsvWriter w(path);
    w.row({"doc_id", "term_index", "weight"});
    char buf[48];
    for (const auto& vec : vectors) {
        for (const auto& [term, weight] : vec.entries) {
            std::snprintf(buf, sizeof(buf), "%.12g", weight);
            w.row({std::to_string(vec.doc_id), std::to_string(term), buf});
        }
    }
}

}  // namespace latentg
