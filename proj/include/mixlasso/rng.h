#pragma once

#include <cstdint>
#include <random>

namespace mixlasso {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for stream `offset` below `seed`. Offsets are fixed per use site so
/// that serial and parallel schedules draw identical numbers.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t offset)
{
    return splitmix64(seed ^ splitmix64(offset));
}

}  // namespace mixlasso
