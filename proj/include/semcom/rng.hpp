#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace semcom {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-based stream key: every distinct (seed, tag, counters...) tuple maps to an
// independent 64-bit generator seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t c : path) {
        h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    }
    return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    return Rng{derive_seed(seed, path)};
}

// Stream tags keep subsystems from sharing draws.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kAwgnBias = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kNoise = 4;
inline constexpr std::uint64_t kRfi = 5;
inline constexpr std::uint64_t kDropout = 6;
}  // namespace stream

}  // namespace semcom
