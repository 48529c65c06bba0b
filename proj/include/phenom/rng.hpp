#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace phenom {

// splitmix64: cheap stateless mixer used to derive independent sub-seeds
// from (seed, index...) tuples. Every stochastic operation in the library
// derives its RNG this way, which makes runs resumable and replayable.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  return splitmix64(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
}

template <typename... Rest>
inline uint64_t mix_seed(uint64_t a, uint64_t b, Rest... rest) {
  return mix_seed(mix_seed(a, b), static_cast<uint64_t>(rest)...);
}

inline std::mt19937_64 make_rng(uint64_t seed) {
  return std::mt19937_64(splitmix64(seed));
}

// Banker's rounding, independent of the ambient FP rounding mode.
inline long long round_half_even(double x) {
  double fl = std::floor(x);
  double frac = x - fl;
  long long base = static_cast<long long>(fl);
  if (frac > 0.5) return base + 1;
  if (frac < 0.5) return base;
  return (base % 2 == 0) ? base : base + 1;
}

}  // namespace phenom
