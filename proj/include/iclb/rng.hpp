#pragma once

// Deterministic randomness helpers.
//
// Every stochastic step in the library goes through the primitives below so
// that runs are reproducible across platforms and standard library versions.
// std::mt19937_64 output is fully specified by the C++ standard; the
// distribution adapters in <random> are not, so they are never used here.
//
// Documented algorithms (independent reimplementations in the test suite
// must follow these exactly):
//   - bounded(rng, n):      rng() % n.
//   - uniform_unit(rng):    (rng() >> 11) * 2^-53, uniform in [0, 1).
//   - sample_without_replacement(n_total, k, seed):
//       partial Fisher-Yates over the index array [0, n_total) driven by
//       mt19937_64(seed); step i swaps position i with
//       i + bounded(rng, n_total - i); the first k entries, in pick order,
//       are the sample.

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace iclb {

// FNV-1a 64-bit content hash.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// SplitMix64 finalizer; decorrelates consecutive or structured inputs.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    return rng() % n;
}

inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Maps (seed, key, salt) to a double in [0, 1). Stateless, so corruption and
// mock providers stay order-independent under concurrent evaluation.
inline double hash_to_unit(std::uint64_t seed, std::string_view key,
                           std::uint64_t salt = 0) {
    std::uint64_t h = mix64(fnv1a64(key) ^ mix64(seed) ^ salt * 0x9e3779b97f4a7c15ull);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// k indices drawn uniformly without replacement from [0, n_total),
// returned in pick order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n_total,
                                                           std::size_t k,
                                                           std::uint64_t seed) {
    std::vector<std::size_t> idx(n_total);
    for (std::size_t i = 0; i < n_total; ++i) idx[i] = i;
    if (k > n_total) k = n_total;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(bounded(rng, n_total - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace iclb
