#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace toder {

/// 64-bit FNV-1a; `h` chains successive calls.
inline constexpr uint64_t fnv1a(std::string_view s, uint64_t h = 1469598103934665603ull) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

namespace detail {
inline constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace detail

using Rng = std::mt19937_64;

/// Derives an independent generator for (seed, module, purpose). Every stochastic
/// choice in the library goes through here so runs are reproducible from one seed.
inline Rng keyed_rng(uint64_t seed, std::string_view module, std::string_view purpose, uint64_t index = 0) {
  uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ fnv1a(module));
  h = detail::splitmix64(h ^ fnv1a(purpose));
  h = detail::splitmix64(h ^ index);
  return Rng(h);
}

/// Uniform double in [0,1) built from raw bits, identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Standard normal via Box-Muller.
inline double gaussian(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace toder
