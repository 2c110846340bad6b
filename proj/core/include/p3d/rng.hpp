#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace p3d {

using Rng = std::mt19937_64;

/// Independent generator for a named stream. Keys are typically
/// (purpose, step, plane, slice); the same keys always give the same stream,
/// so serial and parallel execution draw identical numbers.
inline Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * keys.size());
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto k : keys) push(k);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

inline void fill_normal(Rng& rng, std::span<double> out) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : out) v = n(rng);
}

inline std::vector<double> standard_normal(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    fill_normal(rng, v);
    return v;
}

/// Stream purposes used as the first substream key.
enum class Stream : std::uint64_t {
    Terminal = 1,
    Posterior = 2,
    PlaneChoice = 3,
    Training = 4,
    Motion = 5,
    Init = 6,
    Phantom = 7,
};

inline std::uint64_t key(Stream s) noexcept { return static_cast<std::uint64_t>(s); }

}  // namespace p3d
