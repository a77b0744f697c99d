#pragma once

// Seeded random streams.
//
// Engine is std::mt19937_64 (bit-exact across platforms); the variate
// transforms are fixed here rather than taken from <random> distributions so
// that one seed reproduces the same sequence under any standard library:
//   uniform01: top 53 bits of the engine output, scaled to [0,1)
//   normal:    basic Box-Muller, two engine draws per variate
//   bernoulli: uniform01() < p
// Sub-streams are derived from (seed, tag) with the splitmix64 finalizer.

#include <cmath>
#include <cstdint>
#include <random>

namespace sss {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag));
}

// stream tags used across the library; listed in one place so seeds never collide
namespace stream_tag {
inline constexpr std::uint64_t weight_init = 1;
inline constexpr std::uint64_t pair_sampling = 2;
inline constexpr std::uint64_t dropout = 3;
inline constexpr std::uint64_t prediction = 4;
inline constexpr std::uint64_t bench_noise = 5;
}  // namespace stream_tag

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double normal() {
    const double u1 = 1.0 - uniform01();  // (0,1], keeps log finite
    const double u2 = uniform01();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sss
