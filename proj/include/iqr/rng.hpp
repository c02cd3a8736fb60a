#pragma once

#include <cstdint>
#include <random>

namespace iqr {

using Engine = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for stream `index` under `base`. Trajectory i of an ensemble uses
// derive_seed(base, i), so any member can be replayed on its own.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Engine make_engine(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Engine(seq);
}

}  // namespace iqr
