#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace landau {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Stable 64-bit id for an experiment name (FNV-1a).
constexpr std::uint64_t experiment_id(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Per-realization seed. Depends only on (base, experiment, index), so a
/// realization draws the same numbers whichever worker runs it.
constexpr std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t experiment,
                                    std::uint64_t index) noexcept {
  return mix64(mix64(mix64(base_seed) ^ experiment) + index);
}

inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

}  // namespace landau
