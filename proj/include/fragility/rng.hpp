#pragma once

// Seed derivation: independent streams from a master seed and integer tags.

#include <cstdint>
#include <initializer_list>

namespace fragility {

/// One splitmix64 output step.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds the tags into the seed one at a time.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

/// Stream tags used inside a campaign.
namespace stream {
inline constexpr std::uint64_t kInitial = 1;
inline constexpr std::uint64_t kOutcome = 2;
inline constexpr std::uint64_t kMcmc = 3;
inline constexpr std::uint64_t kStandard = 4;
inline constexpr std::uint64_t kConfig = 5;
}  // namespace stream

}  // namespace fragility
