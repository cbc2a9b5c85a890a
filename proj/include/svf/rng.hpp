#pragma once

#include <cstdint>
#include <random>

namespace svf {

using Seed = std::uint64_t;

/// splitmix64 finalizer; full-avalanche 64-bit mixing.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Logical random streams. Grid and path streams are kept separate so the
/// sampling times are generated independently of the Brownian drivers.
enum class SeedStream : std::uint64_t {
  grid = 1,
  path = 2,
  mc = 3,
};

/// Derive the seed for one (n, replication, stream) cell of an experiment.
/// Chained splitmix64 mixing; collisions across cells are as unlikely as
/// 64-bit hash collisions.
inline constexpr Seed derive_seed(Seed master, std::uint64_t n, std::uint64_t replication,
                                  SeedStream stream) noexcept {
  Seed s = splitmix64(master);
  s = splitmix64(s ^ n);
  s = splitmix64(s ^ replication);
  s = splitmix64(s ^ static_cast<std::uint64_t>(stream));
  return s;
}

inline std::mt19937_64 make_engine(Seed seed) { return std::mt19937_64{seed}; }

}  // namespace svf
