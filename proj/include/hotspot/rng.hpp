#pragma once

#include <cstdint>
#include <random>

namespace hotspot {

// Seed streams are derived from a master seed by SplitMix64 over
// (master, stream, index). Every consumer owns its own engine, so results do
// not depend on evaluation order or thread count.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

namespace streams {
inline constexpr std::uint64_t schedule = 1;
inline constexpr std::uint64_t patrols = 2;
inline constexpr std::uint64_t crime = 3;
inline constexpr std::uint64_t world = 4;
inline constexpr std::uint64_t replication = 5;
inline constexpr std::uint64_t model = 6;
}  // namespace streams

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) {
    return Engine(derive_seed(master, stream, index));
}

// Poisson draw with a zero-rate short cut; std::poisson_distribution rejects 0.
inline int poisson(Engine& rng, double mean) {
    if (!(mean > 0.0)) return 0;
    return std::poisson_distribution<int>(mean)(rng);
}

}  // namespace hotspot
