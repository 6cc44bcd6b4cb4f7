#pragma once

// rng.hpp — deterministic randomness helpers. std::mt19937_64 is seeded and
// stepped identically everywhere; std::uniform_int_distribution and
// std::shuffle are avoided because their outputs are implementation-defined.

#include <cstdint>
#include <random>
#include <vector>

#include "dmm/core.hpp"

namespace dmm {

using Rng = std::mt19937_64;

inline u64 splitmix64(u64 x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Uniform draw from [0, n) by rejection; portable across standard libraries.
inline u64 rng_below(Rng& rng, u64 n) {
    const u64 limit = ~u64(0) - (~u64(0) % n + 1) % n;
    u64 x;
    do {
        x = rng();
    } while (x > limit);
    return x % n;
}

template <class T>
void fisher_yates(Rng& rng, std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

inline std::vector<word> random_permutation(Rng& rng, u64 n) {
    std::vector<word> p(n);
    for (u64 i = 0; i < n; ++i)
        p[i] = i;
    fisher_yates(rng, p);
    return p;
}

}  // namespace dmm
