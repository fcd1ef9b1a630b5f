#pragma once

#include <cmath>
#include <cstdint>

namespace cafe::rng {

// Counter-based random streams: every draw is a pure function of
// (seed, k0, k1, k2, k3). Workers can evaluate any subset of the key space in
// any order and still produce the same numbers, which keeps parallel runs and
// reruns byte-reproducible.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t k0, std::uint64_t k1 = 0,
                             std::uint64_t k2 = 0, std::uint64_t k3 = 0) {
  std::uint64_t h = mix64(seed + kGolden);
  h = mix64(h ^ (k0 + 0xA24BAED4963EE407ull));
  h = mix64(h ^ (k1 + 0x1EF57D8337D4ADBBull));
  h = mix64(h ^ (k2 + 0x2545F4914F6CDD1Dull));
  h = mix64(h ^ (k3 + 0x9FB21C651E98DF25ull));
  return h;
}

/// Uniform draw in [0, 1).
inline double u01(std::uint64_t seed, std::uint64_t k0, std::uint64_t k1 = 0,
                  std::uint64_t k2 = 0, std::uint64_t k3 = 0) {
  return static_cast<double>(hash(seed, k0, k1, k2, k3) >> 11) * 0x1.0p-53;
}

/// Uniform draw in (0, 1]; safe as a log() argument.
inline double u01_open(std::uint64_t seed, std::uint64_t k0, std::uint64_t k1 = 0,
                       std::uint64_t k2 = 0, std::uint64_t k3 = 0) {
  return static_cast<double>((hash(seed, k0, k1, k2, k3) >> 11) + 1) * 0x1.0p-53;
}

/// Standard normal draw via Box-Muller on two sub-keys of k3.
inline double gauss(std::uint64_t seed, std::uint64_t k0, std::uint64_t k1 = 0,
                    std::uint64_t k2 = 0) {
  const double u1 = u01_open(seed, k0, k1, k2, 1);
  const double u2 = u01(seed, k0, k1, k2, 2);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Uniform integer in [0, n).
inline std::uint64_t below(std::uint64_t n, std::uint64_t seed, std::uint64_t k0,
                           std::uint64_t k1 = 0, std::uint64_t k2 = 0, std::uint64_t k3 = 0) {
  return static_cast<std::uint64_t>(u01(seed, k0, k1, k2, k3) * static_cast<double>(n));
}

// Key-space tags: the first key word of every call site, so distinct uses of
// the same seed never collide.
enum Tag : std::uint64_t {
  kTagRoot = 1,
  kTagNoise = 2,
  kTagIntervention = 3,
  kTagPermutation = 4,
  kTagBootstrap = 5,
  kTagBagging = 6,
  kTagInit = 7,
  kTagPerturb = 8,
  kTagSplit = 9,
};

}  // namespace cafe::rng
