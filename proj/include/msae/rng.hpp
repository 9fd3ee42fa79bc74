// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic random number generation.
//
// Every random draw in this library goes through the generators below so that
// runs are bit-reproducible across platforms and standard-library versions.
// The algorithms are fixed:
//
//   * splitmix64 (Steele, Lea, Flood 2014) expands a 64-bit seed into state
//     and derives independent substream seeds.
//   * xoshiro256** 1.0 (Blackman & Vigna 2018) is the workhorse generator.
//   * Bounded integers use rejection sampling on the high bits (unbiased).
//   * Uniform doubles take the top 53 bits: (x >> 11) * 2^-53.
//   * Gaussians use the Box-Muller transform on those uniforms, caching the
//     second variate.
//
// std::shuffle / std::*_distribution are never used; their output is
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <vector>

namespace msae {

/// splitmix64 step: advances `state` and returns the next output.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256** seeded via splitmix64 as recommended by its authors.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64_next(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Unbiased integer in [0, bound) by rejection on the modulo threshold.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; second variate is cached.
    double next_gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * kPi * u2;
        cached_ = radius * std::sin(angle);
        have_cached_ = true;
        return radius * std::cos(angle);
    }

    /// Fisher-Yates shuffle with next_below (stable across platforms).
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    static constexpr double kPi = 3.141592653589793238462643383279502884;

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4]{};
    double cached_ = 0.0;
    bool have_cached_ = false;
};

/// Derives the seed of an independent substream. Stream ids keep the
/// initializer, shuffle, and mask generators decoupled: drawing from one
/// never shifts another.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::uint64_t sm = master_seed ^ (0xa0761d6478bd642fULL * (stream_id + 1));
    std::uint64_t s = splitmix64_next(sm);
    s ^= splitmix64_next(sm);
    return s;
}

} // namespace msae
