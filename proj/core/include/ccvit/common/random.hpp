#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace ccvit {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stable 64-bit FNV-1a, used for seed labels and artifact hashes.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives an independent stream seed from a base seed and a key path, e.g.
// derive_seed(seed, {epoch, sample}). Order of keys matters.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(base);
    for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
    return derive_seed(base, {fnv1a(label)});
}

} // namespace ccvit
