#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "rwre/point.hpp"

namespace rwre {

/// SplitMix64 finalizer. Used as the mixing function of every counter-based
/// draw in the library.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    return splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

/// Key of the counter-based stream attached to (seed, x, salt).
constexpr std::uint64_t site_key(std::uint64_t seed, const Point& x, std::uint64_t salt) {
    std::uint64_t h = splitmix64(seed ^ 0xd1b54a32d192ed03ULL);
    for (int i = 0; i < kMaxDim; ++i) {
        h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::uint32_t>(x[i])));
    }
    return hash_combine(h, salt);
}

/// Uniform double in [0,1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform in (0,1], safe for logarithms.
constexpr double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

/// Stateless stream: the k-th draw of a key is a pure function of (key, k).
class CounterStream {
public:
    explicit constexpr CounterStream(std::uint64_t key) : key_(key) {}

    constexpr std::uint64_t bits(std::uint64_t k) const {
        return splitmix64(key_ + (k + 1) * 0x9e3779b97f4a7c15ULL);
    }
    constexpr double uniform(std::uint64_t k) const { return to_unit(bits(k)); }
    constexpr double open_uniform(std::uint64_t k) const { return to_open_unit(bits(k)); }

private:
    std::uint64_t key_;
};

/// Sequential generator for one Monte Carlo path. Seeded from
/// (master seed, path index) so any parallel schedule reproduces the
/// same paths.
class PathRng {
public:
    PathRng(std::uint64_t master_seed, std::uint64_t path_index)
        : engine_(hash_combine(splitmix64(master_seed), path_index)) {}

    double uniform() { return to_unit(engine_()); }
    double open_uniform() { return to_open_unit(engine_()); }
    /// Exponential with rate 1.
    double exponential() { return -std::log(open_uniform()); }
    std::uint64_t bits() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace rwre
