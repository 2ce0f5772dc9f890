#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace latentg {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// map validation failures to exit code 1 and runtime failures to exit code 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : Error {
    using Error::Error;
};
struct RuntimeFailure : Error {
    using Error::Error;
};

struct SchemaError : ValidationError { using ValidationError::ValidationError; };
struct LabelError : ValidationError { using ValidationError::ValidationError; };
struct DuplicateIdError : ValidationError { using ValidationError::ValidationError; };
struct StratificationError : ValidationError { using ValidationError::ValidationError; };
struct FoldError : ValidationError { using ValidationError::ValidationError; };
struct StatsError : ValidationError { using ValidationError::ValidationError; };
struct VocabError : ValidationError { using ValidationError::ValidationError; };
struct ConfigError : ValidationError { using ValidationError::ValidationError; };
struct ShapeError : ValidationError { using ValidationError::ValidationError; };
struct FormatError : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct NumericError : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct DivergenceError : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct StateError : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct LookupError : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct ContractError : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };

// Deterministic RNG used everywhere. mt19937_64 plus hand-rolled
// distributions so streams are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::size_t index(std::size_t n) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return static_cast<std::size_t>(v % n);
    }

    // Box-Muller, one value per call (cache the spare)
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a 64-bit, used for config and artifact digests.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
    return fnv1a(s.data(), s.size());
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// Pairwise summation; order-stable under permutation tests.
template <typename T>
T pairwise_sum(const T* data, std::size_t n) {
    if (n <= 8) {
        T s = T(0);
        for (std::size_t i = 0; i < n; ++i) s += data[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

template <typename T>
T pairwise_sum(const std::vector<T>& v) {
    return pairwise_sum(v.data(), v.size());
}

}  // namespace latentg
