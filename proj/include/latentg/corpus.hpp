#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "latentg/common.hpp"
#include "latentg/csv.hpp"

namespace latentg {

// ---------------------------------------------------------------------------
// Labels

class LabelSet {
public:
    LabelSet() = default;

    explicit LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
        if (names_.size() < 2) throw ConfigError("label set needs at least 2 classes");
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (!by_name_.emplace(names_[i], static_cast<int>(i)).second)
                throw ConfigError("duplicate label name: " + names_[i]);
        }
    }

    static LabelSet default_mental_health() {
        return LabelSet({"Normal", "Depression", "Suicidal", "Anxiety", "Stress",
                         "Bipolar", "Personal Disorder"});
    }

    int size() const { return static_cast<int>(names_.size()); }
    const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
    const std::vector<std::string>& names() const { return names_; }

    std::optional<int> find(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) return std::nullopt;
        return it->second;
    }

    bool operator==(const LabelSet& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> by_name_;
};

struct Sample {
    std::int64_t id = 0;
    std::string raw_text;
    std::string clean_text;  // empty until cleaned
    int label = 0;
};

// ---------------------------------------------------------------------------
// Text cleaning

namespace detail {

inline bool is_space_cp(std::uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' ||
           cp == '\f' || cp == 0xA0 || (cp >= 0x2000 && cp <= 0x200A) ||
           cp == 0x2028 || cp == 0x2029 || cp == 0x202F || cp == 0x3000;
}

// Punctuation/symbol test: exact for ASCII, coarse block-based for the
// common non-ASCII ranges (Latin-1 punctuation, general punctuation,
// arrows/math/misc symbols, CJK punctuation, fullwidth forms).
inline bool is_punct_or_symbol_cp(std::uint32_t cp) {
    if (cp < 0x80) {
        char c = static_cast<char>(cp);
        bool alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                     (c >= '0' && c <= '9');
        return !alnum && !is_space_cp(cp) && cp >= 0x21;
    }
    if (cp >= 0xA1 && cp <= 0xBF) return true;
    if (cp == 0xD7 || cp == 0xF7) return true;
    if (cp >= 0x2010 && cp <= 0x205E) return true;  // general punctuation
    if (cp >= 0x2190 && cp <= 0x2BFF) return true;  // arrows, math, symbols
    if (cp >= 0x3001 && cp <= 0x303F) return true;  // CJK punctuation
    if (cp >= 0xFE30 && cp <= 0xFE4F) return true;
    if (cp >= 0xFF01 && cp <= 0xFF0F) return true;
    if (cp >= 0xFF1A && cp <= 0xFF20) return true;
    if (cp >= 0xFF3B && cp <= 0xFF40) return true;
    if (cp >= 0xFF5B && cp <= 0xFF65) return true;
    return false;
}

inline std::uint32_t lower_cp(std::uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    // Latin-1 uppercase letters (multiplication sign excluded above)
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    return cp;
}

// Decodes one UTF-8 codepoint; malformed bytes pass through as Latin-1.
inline std::uint32_t decode_utf8(const std::string& s, std::size_t& i) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) { ++i; return c; }
    int extra = 0;
    std::uint32_t cp = 0;
    if ((c & 0xE0) == 0xC0) { cp = c & 0x1F; extra = 1; }
    else if ((c & 0xF0) == 0xE0) { cp = c & 0x0F; extra = 2; }
    else if ((c & 0xF8) == 0xF0) { cp = c & 0x07; extra = 3; }
    else { ++i; return c; }
    for (int k = 1; k <= extra; ++k) {
        if (i + static_cast<std::size_t>(k) >= s.size()) { ++i; return c; }
        unsigned char cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((cc & 0xC0) != 0x80) { ++i; return c; }
        cp = (cp << 6) | (cc & 0x3F);
    }
    i += static_cast<std::size_t>(extra) + 1;
    return cp;
}

inline void encode_utf8(std::uint32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline bool starts_with(const std::string& s, std::size_t pos, const char* prefix) {
    for (std::size_t k = 0; prefix[k]; ++k) {
        if (pos + k >= s.size()) return false;
        char a = s[pos + k];
        if (a >= 'A' && a <= 'Z') a = static_cast<char>(a + 32);
        if (a != prefix[k]) return false;
    }
    return true;
}

}  // namespace detail

// Cleaning pipeline: lowercase, strip [...] spans, HTML tags, URL tokens,
// punctuation/symbols and newlines, collapse whitespace, trim. Total and
// idempotent.
inline std::string clean_text(const std::string& raw) {
    // pass 1: lowercase + drop bracketed spans and tags
    std::string stage1;
    stage1.reserve(raw.size());
    {
        std::size_t i = 0;
        while (i < raw.size()) {
            char c = raw[i];
            if (c == '[') {
                std::size_t close = raw.find(']', i + 1);
                if (close != std::string::npos) { i = close + 1; continue; }
            }
            if (c == '<') {
                std::size_t close = raw.find('>', i + 1);
                if (close != std::string::npos) { i = close + 1; continue; }
            }
            std::size_t j = i;
            std::uint32_t cp = detail::decode_utf8(raw, j);
            detail::encode_utf8(detail::lower_cp(cp), stage1);
            i = j;
        }
    }
    // pass 2: drop URL tokens (maximal non-whitespace runs starting with a
    // scheme or www.)
    std::string stage2;
    stage2.reserve(stage1.size());
    {
        std::size_t i = 0;
        while (i < stage1.size()) {
            std::size_t j = i;
            std::uint32_t cp = detail::decode_utf8(stage1, j);
            if (detail::is_space_cp(cp)) {
                stage2.push_back(' ');
                i = j;
                continue;
            }
            // token start
            std::size_t tok_end = i;
            while (tok_end < stage1.size()) {
                std::size_t k = tok_end;
                std::uint32_t tcp = detail::decode_utf8(stage1, k);
                if (detail::is_space_cp(tcp)) break;
                tok_end = k;
            }
            bool is_url = detail::starts_with(stage1, i, "http://") ||
                          detail::starts_with(stage1, i, "https://") ||
                          detail::starts_with(stage1, i, "www.");
            if (!is_url) stage2.append(stage1, i, tok_end - i);
            i = tok_end;
        }
    }
    // pass 3: drop punctuation/symbols, collapse whitespace, trim
    std::string out;
    out.reserve(stage2.size());
    bool pending_space = false;
    std::size_t i = 0;
    while (i < stage2.size()) {
        std::uint32_t cp = detail::decode_utf8(stage2, i);
        if (detail::is_space_cp(cp)) {
            pending_space = true;
            continue;
        }
        if (detail::is_punct_or_symbol_cp(cp)) continue;
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        detail::encode_utf8(cp, out);
    }
    return out;
}

// Optional stopword removal over cleaned text. Off by default.
inline std::unordered_set<std::string> load_stoplist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read stoplist: " + path);
    std::unordered_set<std::string> stop;
    std::string word;
    while (in >> word) stop.insert(clean_text(word));
    return stop;
}

inline std::string remove_stopwords(const std::string& cleaned,
                                    const std::unordered_set<std::string>& stop) {
    std::string out;
    std::size_t start = 0;
    while (start < cleaned.size()) {
        std::size_t end = cleaned.find(' ', start);
        if (end == std::string::npos) end = cleaned.size();
        if (end > start) {
            std::string word = cleaned.substr(start, end - start);
            if (!stop.count(word)) {
                if (!out.empty()) out.push_back(' ');
                out += word;
            }
        }
        start = end + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus

struct CorpusStats {
    std::vector<std::int64_t> class_counts;            // indexed by label
    std::map<int, std::int64_t> length_histogram;      // word count -> docs
};

struct SplitSpec {
    double test_fraction = 0.2;
    std::optional<int> k_folds;
    std::uint64_t seed = 0;
};

class Corpus {
public:
    Corpus() = default;
    explicit Corpus(LabelSet labels) : labels_(std::move(labels)) {}

    const LabelSet& labels() const { return labels_; }
    const std::vector<Sample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    const Sample& operator[](std::size_t i) const { return samples_[i]; }

    void add(Sample s) {
        if (!ids_.insert(s.id).second)
            throw DuplicateIdError("duplicate sample id " + std::to_string(s.id));
        if (s.label < 0 || s.label >= labels_.size())
            throw LabelError("label index out of range for sample id " + std::to_string(s.id));
        samples_.push_back(std::move(s));
    }

    void clean_all() {
        for (auto& s : samples_) s.clean_text = clean_text(s.raw_text);
    }

    std::int64_t max_id() const {
        std::int64_t m = 0;
        for (const auto& s : samples_) m = std::max(m, s.id);
        return m;
    }

private:
    LabelSet labels_ = LabelSet::default_mental_health();
    std::vector<Sample> samples_;
    std::unordered_set<std::int64_t> ids_;
};

struct CsvSchema {
    std::string id_column = "id";
    std::string text_column = "statement";
    std::string label_column = "status";
};

inline Corpus load_csv(const std::string& path, const CsvSchema& schema,
                       const LabelSet& labels) {
    CsvReader reader(path);
    std::vector<std::string> header;
    if (!reader.next(header)) throw SchemaError("CSV file is empty: " + path);
    auto col = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw SchemaError("missing column '" + name + "' in " + path);
    };
    const std::size_t id_col = col(schema.id_column);
    const std::size_t text_col = col(schema.text_column);
    const std::size_t label_col = col(schema.label_column);

    Corpus corpus(labels);
    std::vector<std::string> fields;
    std::int64_t row = 0;
    while (reader.next(fields)) {
        ++row;
        if (fields.size() == 1 && fields[0].empty()) continue;  // trailing newline
        if (fields.size() != header.size())
            throw SchemaError("row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(header.size()));
        Sample s;
        try {
            s.id = std::stoll(fields[id_col]);
        } catch (const std::exception&) {
            throw SchemaError("row " + std::to_string(row) + ": id is not an integer");
        }
        s.raw_text = fields[text_col];
        auto lbl = labels.find(fields[label_col]);
        if (!lbl)
            throw LabelError("row " + std::to_string(row) + ": unknown label '" +
                             fields[label_col] + "'");
        s.label = *lbl;
        corpus.add(std::move(s));
    }
    return corpus;
}

// Augmentation over cleaned text. Transformed samples are re-cleaned; results
// whose clean text already exists in the corpus are suppressed.
struct AugmentResult {
    Corpus corpus;
    std::size_t added = 0;
    std::size_t suppressed = 0;
    std::size_t failed = 0;
};

inline AugmentResult augment(const Corpus& corpus,
                             const std::function<std::string(const std::string&)>& hook) {
    AugmentResult result;
    result.corpus = corpus;
    std::unordered_set<std::string> seen;
    for (const auto& s : corpus.samples()) seen.insert(s.clean_text);
    std::int64_t next_id = corpus.max_id() + 1;
    for (const auto& s : corpus.samples()) {
        std::string transformed;
        try {
            transformed = clean_text(hook(s.clean_text));
        } catch (const std::exception&) {
            ++result.failed;
            continue;
        }
        if (transformed.empty() || seen.count(transformed)) {
            ++result.suppressed;
            continue;
        }
        seen.insert(transformed);
        Sample fresh;
        fresh.id = next_id++;
        fresh.raw_text = transformed;
        fresh.clean_text = transformed;
        fresh.label = s.label;
        result.corpus.add(std::move(fresh));
        ++result.added;
    }
    return result;
}

namespace detail {

inline std::vector<std::vector<std::size_t>> indices_by_class(const Corpus& corpus) {
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(corpus.labels().size()));
    for (std::size_t i = 0; i < corpus.size(); ++i)
        by_class[static_cast<std::size_t>(corpus[i].label)].push_back(i);
    return by_class;
}

inline Corpus subset(const Corpus& corpus, const std::vector<std::size_t>& idx) {
    Corpus out(corpus.labels());
    std::vector<std::size_t> sorted = idx;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i : sorted) out.add(corpus[i]);
    return out;
}

}  // namespace detail

// Largest-remainder stratified split; deterministic under spec.seed.
inline std::pair<Corpus, Corpus> stratified_split(const Corpus& corpus,
                                                  const SplitSpec& spec) {
    if (spec.test_fraction <= 0.0 || spec.test_fraction >= 1.0)
        throw ConfigError("test_fraction must be in (0,1)");
    auto by_class = detail::indices_by_class(corpus);
    const std::size_t K = by_class.size();
    for (std::size_t c = 0; c < K; ++c) {
        if (!by_class[c].empty() && by_class[c].size() < 2)
            throw StratificationError("class '" + corpus.labels().name(static_cast<int>(c)) +
                                      "' has fewer than 2 samples");
    }
    // per-class test counts by largest remainder so the total is exact
    const double total_exact = spec.test_fraction * static_cast<double>(corpus.size());
    const auto total_test = static_cast<std::size_t>(std::llround(total_exact));
    std::vector<std::size_t> take(K, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < K; ++c) {
        const double exact = spec.test_fraction * static_cast<double>(by_class[c].size());
        take[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += take[c];
        remainders.emplace_back(exact - static_cast<double>(take[c]), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < remainders.size() && assigned < total_test; ++i) {
        std::size_t c = remainders[i].second;
        if (take[c] < by_class[c].size()) {
            ++take[c];
            ++assigned;
        }
    }
    Rng rng(spec.seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t c = 0; c < K; ++c) {
        auto pool = by_class[c];
        rng.shuffle(pool);
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (i < take[c]) test_idx.push_back(pool[i]);
            else train_idx.push_back(pool[i]);
        }
    }
    return {detail::subset(corpus, train_idx), detail::subset(corpus, test_idx)};
}

// Stratified k-fold: per-class shuffle, then round-robin deal into folds.
inline std::vector<std::pair<Corpus, Corpus>> kfold(const Corpus& corpus, int k,
                                                    std::uint64_t seed) {
    if (k < 2) throw FoldError("k must be >= 2");
    auto by_class = detail::indices_by_class(corpus);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (!by_class[c].empty() &&
            by_class[c].size() < static_cast<std::size_t>(k))
            throw FoldError("class '" + corpus.labels().name(static_cast<int>(c)) +
                            "' has fewer samples than k=" + std::to_string(k));
    }
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    for (auto& pool : by_class) {
        rng.shuffle(pool);
        for (std::size_t i = 0; i < pool.size(); ++i)
            folds[i % static_cast<std::size_t>(k)].push_back(pool[i]);
    }
    std::vector<std::pair<Corpus, Corpus>> out;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<std::size_t> train_idx;
        for (std::size_t g = 0; g < folds.size(); ++g)
            if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
        out.emplace_back(detail::subset(corpus, train_idx),
                         detail::subset(corpus, folds[f]));
    }
    return out;
}

inline int word_count(const std::string& text) {
    if (text.empty()) return 0;
    int n = 1;
    for (char c : text)
        if (c == ' ') ++n;
    return n;
}

inline CorpusStats stats(const Corpus& corpus) {
    if (corpus.empty()) throw StatsError("cannot compute stats of an empty corpus");
    CorpusStats st;
    st.class_counts.assign(static_cast<std::size_t>(corpus.labels().size()), 0);
    for (const auto& s : corpus.samples()) {
        ++st.class_counts[static_cast<std::size_t>(s.label)];
        const std::string& text = s.clean_text.empty() ? s.raw_text : s.clean_text;
        ++st.length_histogram[word_count(text)];
    }
    return st;
}

// Optional resampling transforms; never applied by default.
inline Corpus drop_to_min(const Corpus& corpus, std::uint64_t seed) {
    auto by_class = detail::indices_by_class(corpus);
    std::size_t min_count = SIZE_MAX;
    for (const auto& pool : by_class)
        if (!pool.empty()) min_count = std::min(min_count, pool.size());
    Rng rng(seed);
    std::vector<std::size_t> keep;
    for (auto& pool : by_class) {
        rng.shuffle(pool);
        for (std::size_t i = 0; i < std::min(pool.size(), min_count); ++i)
            keep.push_back(pool[i]);
    }
    return detail::subset(corpus, keep);
}

inline Corpus duplicate_to_max(const Corpus& corpus, std::uint64_t seed) {
    auto by_class = detail::indices_by_class(corpus);
    std::size_t max_count = 0;
    for (const auto& pool : by_class) max_count = std::max(max_count, pool.size());
    Rng rng(seed);
    Corpus out = corpus;
    std::int64_t next_id = corpus.max_id() + 1;
    for (const auto& pool : by_class) {
        if (pool.empty()) continue;
        for (std::size_t i = pool.size(); i < max_count; ++i) {
            Sample dup = corpus[pool[rng.index(pool.size())]];
            dup.id = next_id++;
            out.add(std::move(dup));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cleaned-corpus persistence and stats export

inline void save_corpus_csv(const Corpus& corpus, const std::string& path) {
    CsvWriter w(path);
    w.row({"id", "statement", "status", "clean"});
    for (const auto& s : corpus.samples())
        w.row({std::to_string(s.id), s.raw_text, corpus.labels().name(s.label),
               s.clean_text});
}

inline Corpus load_corpus_csv(const std::string& path, const LabelSet& labels) {
    CsvReader reader(path);
    std::vector<std::string> header;
    if (!reader.next(header) || header != std::vector<std::string>{"id", "statement", "status", "clean"})
        throw FormatError("not a cleaned corpus file: " + path);
    Corpus corpus(labels);
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != 4) throw FormatError("malformed corpus row in " + path);
        Sample s;
        s.id = std::stoll(fields[0]);
        s.raw_text = fields[1];
        auto lbl = labels.find(fields[2]);
        if (!lbl) throw LabelError("unknown label '" + fields[2] + "' in " + path);
        s.label = *lbl;
        s.clean_text = fields[3];
        corpus.add(std::move(s));
    }
    return corpus;
}

inline void save_stats_csv(const CorpusStats& st, const LabelSet& labels,
                           const std::string& class_counts_path,
                           const std::string& length_hist_path) {
    {
        CsvWriter w(class_counts_path);
        w.row({"label", "count"});
        for (std::size_t c = 0; c < st.class_counts.size(); ++c)
            w.row({labels.name(static_cast<int>(c)), std::to_string(st.class_counts[c])});
    }
    {
        CsvWriter w(length_hist_path);
        w.row({"word_count", "count"});
        for (const auto& [len, count] : st.length_histogram)
            w.row({std::to_string(len), std::to_string(count)});
    }
}

}  // namespace latentg
