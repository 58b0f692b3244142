#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace wdetect {

// Counter-based seed derivation. A stream is named by a tuple of integers
// (master seed, trial, edge, step, purpose, ...); the same tuple always maps
// to the same engine state, independent of evaluation order.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

using Engine = std::mt19937_64;

inline Engine stream(std::initializer_list<std::uint64_t> parts) {
  return Engine(derive_seed(parts));
}

// stream purposes
enum class Purpose : std::uint64_t {
  trial_key = 1,
  channel_noise = 2,
  watermark = 3,
  byzantine = 4,
  scalar_probe = 5,
};

inline std::uint64_t tag(Purpose p) { return static_cast<std::uint64_t>(p); }

}  // namespace wdetect
