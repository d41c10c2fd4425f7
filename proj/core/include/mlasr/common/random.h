#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace mlasr {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits. Unlike
// std::uniform_real_distribution this is specified bit-for-bit.
inline double UniformUnit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). n must be positive.
inline std::uint64_t UniformIndex(Rng& rng, std::uint64_t n) {
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

// Uniform integer in the closed range [lo, hi].
inline std::int64_t UniformInclusive(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(
                  UniformIndex(rng, static_cast<std::uint64_t>(hi - lo) + 1));
}

// Standard normal via Box-Muller on UniformUnit draws.
double StandardNormal(Rng& rng);

std::string SerializeRng(const Rng& rng);
Rng DeserializeRng(const std::string& text);

}  // namespace mlasr
