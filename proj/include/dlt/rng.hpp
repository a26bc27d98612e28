#pragma once

#include <cstdint>
#include <random>

namespace dlt {

using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates seeds derived from nearby integers.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from a base seed and up to three indices
// (epoch, batch, sample, ...). Same inputs always give the same stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = mix64(base);
    s = mix64(s ^ mix64(a));
    s = mix64(s ^ mix64(b + 0x3c6ef372fe94f82aULL));
    s = mix64(s ^ mix64(c + 0x1f83d9abfb41bd6bULL));
    return s;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

} // namespace dlt
