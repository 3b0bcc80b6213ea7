#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace rlgen {

/// One splitmix64 step. Advances `state` and returns the mixed output.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent 64-bit seed from (master, label, index).
/// Every RNG stream in the project is created through this, so results
/// never depend on scheduling or call order.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                 std::uint64_t index = 0) {
    // FNV-1a over the label, folded into a splitmix chain.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t state = master;
    std::uint64_t a = splitmix64(state);
    state ^= h;
    std::uint64_t b = splitmix64(state);
    state ^= index * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL;
    std::uint64_t c = splitmix64(state);
    return a ^ (b << 1) ^ c;
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view label,
                                std::uint64_t index = 0) {
    return std::mt19937_64(derive_seed(master, label, index));
}

/// Unbiased draw from [0, n). Implementation-independent (no std::uniform_int_distribution,
/// whose output differs across standard libraries).
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
        std::uint64_t x = rng();
        if (x >= threshold) return x % n;
    }
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Fisher-Yates shuffle using uniform_below, so shuffles are reproducible
/// across standard libraries.
template <class T>
void shuffle_vec(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

/// Inverse-CDF sample from the discrete distribution p[0..n) at quantile u in [0,1).
/// Clamps to the last positive entry so cumulative rounding cannot fall off the end.
inline int sample_discrete(const double* p, int n, double u) {
    double cum = 0.0;
    int last = 0;
    for (int i = 0; i < n; ++i) {
        if (p[i] <= 0.0) continue;
        cum += p[i];
        last = i;
        if (u < cum) return i;
    }
    return last;
}

}  // namespace rlgen
