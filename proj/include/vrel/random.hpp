#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace vrel {

using Rng = std::mt19937_64;

// Independent seed streams derived from one master seed. A stream's seed is
// splitmix64(master + golden * (stream + 1)), so streams never collide for a
// given master and adding a stream never perturbs the others.
enum class SeedStream : std::uint64_t {
    synth = 0,
    init = 1,
    batches = 2,
    dropout = 3,
    sources = 4,
    gamma_init = 5,
    stage2_batches = 6,
    stage2_dropout = 7,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, SeedStream stream) {
    return splitmix64(master + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(stream) + 1));
}

inline Rng make_rng(std::uint64_t master, SeedStream stream) {
    return Rng(derive_seed(master, stream));
}

// The helpers below avoid std::*_distribution, whose outputs differ between
// standard library implementations.

inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    // Modulo bias is below 2^-40 for every n used here.
    return static_cast<std::size_t>(rng() % n);
}

template <typename Container>
void shuffle(Container& c, Rng& rng) {
    for (std::size_t i = c.size(); i > 1; --i) {
        using std::swap;
        swap(c[i - 1], c[uniform_index(rng, i)]);
    }
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace vrel
