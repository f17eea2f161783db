#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pathprof {

// std::mt19937_64 output is fully specified by the standard; the distribution
// adaptors are not. These helpers keep every seeded draw bit-reproducible.

inline std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t n) {
    // Unbiased rejection sampling over [0, n).
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = rng();
        if (r >= threshold) {
            return r % n;
        }
    }
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(bounded_rand(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    seeded_shuffle(idx, rng);
    return idx;
}

}  // namespace pathprof
