#pragma once

// Random number plumbing.
//
// Environments are sampled with a keyed hash: every bond (or site) value is a
// pure function of (seed, coordinates, axis), so nested windows agree on their
// overlap and sampling order or thread count never changes the field.
// Walkers use std::mt19937_64 streams seeded from (master seed, replica).

#include <cstdint>
#include <random>

#include "rclab/lattice.hpp"

namespace rclab {

inline constexpr const char* kFieldGenerator = "splitmix64-coordhash-v1";

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform on (0, 1]; never returns 0 so U^(1/gamma) stays positive.
constexpr double unit_open_closed(std::uint64_t bits) noexcept {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

// Uniform on [0, 1).
constexpr double unit_closed_open(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

enum class HashTag : std::uint64_t { Bond = 0x62, Site = 0x73, Stream = 0x77 };

inline std::uint64_t coord_hash(std::uint64_t seed, const Point& p, std::uint64_t tag) noexcept {
  std::uint64_t h = splitmix64(seed ^ 0x5243'4c42'0000'0000ULL);
  for (int i = 0; i < p.dim(); ++i) h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(p[i])));
  return splitmix64(h ^ tag);
}

inline std::uint64_t bond_key(std::uint64_t seed, const Point& lo, int axis) noexcept {
  return coord_hash(seed, lo, (static_cast<std::uint64_t>(HashTag::Bond) << 8) | static_cast<std::uint64_t>(axis));
}

inline std::uint64_t site_key(std::uint64_t seed, const Point& x) noexcept {
  return coord_hash(seed, x, static_cast<std::uint64_t>(HashTag::Site) << 8);
}

// Seed for replica `index` of an experiment with master seed `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(master ^ 0xa5a5'a5a5'a5a5'a5a5ULL) + index);
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Engine(seq);
}

inline double uniform01(Engine& eng) { return unit_closed_open(eng()); }

}  // namespace rclab
