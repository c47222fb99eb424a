/**
 * @file rng.hpp
 * @brief Seeded random helpers with fixed cross-platform behavior.
 *
 * std::uniform_*_distribution is implementation-defined, so every sampled
 * value that ends up in a reproducible artifact (triplets, random masks,
 * synthetic benchmarks) goes through these helpers instead.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace fmf {

/// Uniform integer in [0, n). Rejection sampling, no modulo bias.
inline std::uint32_t bounded_uint(std::mt19937& rng, std::uint32_t n) {
    const std::uint32_t limit = UINT32_MAX - UINT32_MAX % n;
    std::uint32_t r = rng();
    while (r >= limit) r = rng();
    return r % n;
}

/// Uniform double in [0, 1) with 24 bits of entropy.
inline double uniform01(std::mt19937& rng) {
    return (rng() >> 8) * (1.0 / 16777216.0);
}

/// Uniform double in [lo, hi).
inline double uniform_in(std::mt19937& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// k distinct values from [0, n), ascending. Partial Fisher-Yates.
inline std::vector<int> sample_without_replacement(std::mt19937& rng, int n,
                                                   int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(bounded_uint(
                              rng, static_cast<std::uint32_t>(n - i)));
        std::swap(pool[i], pool[j]);
    }
    std::vector<int> out(pool.begin(), pool.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace fmf
