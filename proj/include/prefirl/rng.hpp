#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace prefirl {

using Rng = std::mt19937_64;

/// Streams of the seed split scheme. Every random draw in a run comes from
/// `derive_seed(master, stream, a, b, c)`, where the counters are
/// (episode, step, rollout) for the stream in question.
enum class Stream : std::uint64_t {
  kDemos = 1,
  kInit = 2,
  kFit = 3,
  kCandidates = 4,
  kOracle = 5,
  kPutback = 6,
  kExpert = 7,
  kEval = 8,
};

constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t a = 0,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ static_cast<std::uint64_t>(stream));
  h = mix64(h ^ a);
  h = mix64(h ^ (b + 0x632be59bd9b4e019ULL));
  h = mix64(h ^ (c + 0x85157af5ULL));
  return h;
}

inline double uniform01(Rng& rng) {
  // 53 random mantissa bits; independent of the standard library's distributions.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
  // Box-Muller, one value per call.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

}  // namespace prefirl
