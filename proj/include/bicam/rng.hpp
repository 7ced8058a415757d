#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace bicam {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; the mixing step used for every sub-seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Sub-seed for a named stream of a seeded command: splitmix64(seed ^ fnv1a64(name)).
/// Keyed by name rather than by scheduling order, so parallel execution
/// cannot change which stream an item receives.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) noexcept {
  return splitmix64(seed ^ fnv1a64(name));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(seed) + index);
}

/// Normal(0, stddev) truncated to [-2 stddev, 2 stddev] by rejection.
inline double truncated_normal(Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (;;) {
    const double z = dist(rng);
    if (z >= -2.0 && z <= 2.0) return z * stddev;
  }
}

}  // namespace bicam
