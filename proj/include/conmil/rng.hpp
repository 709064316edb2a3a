#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace conmil {

// Deterministic draws on top of mt19937_64. The std distributions are
// implementation-defined, so anything that feeds golden files or
// fingerprints goes through these helpers instead.
namespace rng {

inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

inline std::uint64_t uniform_index(std::mt19937_64& g, std::uint64_t n) {
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = g();
  while (v >= limit) v = g();
  return v % n;
}

inline double normal(std::mt19937_64& g, double mean = 0.0, double stddev = 1.0) {
  // Box-Muller, one value per call.
  double u1 = uniform01(g);
  while (u1 <= 0.0) u1 = uniform01(g);
  const double u2 = uniform01(g);
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean + stddev * z;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& g) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_index(g, i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace rng
}  // namespace conmil
