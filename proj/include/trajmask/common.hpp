#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajmask {

// ----------------------------- errors -----------------------------

// Shape/dimension mismatch between tensors or against an op's contract.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Violated API contract (non-scalar loss, out-of-range index, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Malformed binary file; carries the byte offset where parsing failed.
struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, std::size_t at)
        : std::runtime_error(msg + " (at byte offset " + std::to_string(at) + ")"), offset(at) {}
    std::size_t offset;
};

// Bad user configuration; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ----------------------------- rng -----------------------------

// splitmix64, used to derive independent seeds from (seed, stream ids).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t s = splitmix64(seed ^ 0x1234567890abcdefULL);
    s = splitmix64(s ^ a);
    s = splitmix64(s ^ b);
    return splitmix64(s ^ c);
}

// Seeded RNG wrapper. All sampling in the project goes through this so
// the distributions are explicit and runs are reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(gen_);
    }
    // uniform integer in [lo, hi] inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(gen_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(gen_);
    }
    bool bernoulli(double p) { return uniform() < p; }

    // Geometric with support {1, 2, ...} and mean 1/p, via inverse CDF.
    int geometric(double p) {
        double u = uniform();
        int g = 1 + static_cast<int>(std::floor(std::log1p(-u) / std::log1p(-p)));
        return g < 1 ? 1 : g;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

// ----------------------------- misc -----------------------------

// FNV-1a over raw bytes; used for manifest input hashes and feature-cache keys.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string format_double(double v);  // shortest round-trip decimal, for CSV output

}  // namespace trajmask
