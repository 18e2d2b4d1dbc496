#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace chexfuse {

// All randomness in the project flows through these helpers. std::mt19937_64
// output is fully specified by the standard, but the std <random>
// distributions are not, so the draws are rolled by hand to keep runs
// reproducible across toolchains and processes.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// Independent stream per (seed, stream): splitmix64 over the pair so that
/// nearby seeds / epoch indices do not produce correlated streams.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return Rng(z ^ (z >> 31));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n); n must be positive. Rejection sampling keeps
/// the draw unbiased.
inline std::uint64_t uniform_int(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = n * (UINT64_MAX / n);
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

/// Standard normal via Box-Muller. One value per call; no cached spare, so
/// the stream position is a simple function of the number of calls.
inline double normal(Rng& rng) {
  const double u1 = 1.0 - uniform_real(rng);  // (0, 1], keeps log() finite
  const double u2 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Fisher-Yates with explicit draws (std::shuffle is implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_int(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace chexfuse
