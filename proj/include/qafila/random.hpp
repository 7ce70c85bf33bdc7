#ifndef QAFILA_RANDOM_HPP
#define QAFILA_RANDOM_HPP

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace qafila {

// std::mt19937_64 output is fixed by the standard, but the std distributions
// and std::shuffle are not. These helpers keep seeded results identical
// across standard libraries.

/// Uniform integer in [0, n) by rejection sampling. n must be > 0.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::mt19937_64::max() - (std::mt19937_64::max() % n + 1) % n;
    std::uint64_t x = rng();
    while (x > limit) x = rng();
    return x % n;
}

/// Uniform double in [0, 1) with 53 bits of randomness.
inline double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

/// splitmix64 finalizer; mixes a 64-bit value into a well-distributed hash.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace qafila

#endif  // QAFILA_RANDOM_HPP
