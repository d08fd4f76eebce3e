#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace asterenv {

using Rng = std::mt19937_64;

/// Derives an independent stream from a master seed and a path of indices,
/// e.g. stream(seed, {level, b, k, attempt}). The same path always yields the
/// same stream, which is what makes parallel replicates reproducible.
inline Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * path.size());
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (std::uint64_t v : path) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Uniform double on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller. Used only by the scenario generator.
double standard_normal(Rng& rng);

}  // namespace asterenv
