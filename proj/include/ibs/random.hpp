#pragma once

#include <cstdint>
#include <random>

namespace ibs {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed derivation: every (stream, a, b) triple under one master
/// seed maps to an independent generator seed. No global random state exists.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ (stream * 0xd1b54a32d192ed03ULL));
  h = splitmix64(h ^ (a * 0x8cb92ba72f3d8dd7ULL));
  return splitmix64(h ^ (b * 0xaef17502108ef2d9ULL));
}

namespace seed_stream {
inline constexpr std::uint64_t kTrainEpisode = 1;
inline constexpr std::uint64_t kEvalEpisode = 2;
inline constexpr std::uint64_t kAgentInit = 3;
inline constexpr std::uint64_t kAgentSampling = 4;
}  // namespace seed_stream

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace ibs
