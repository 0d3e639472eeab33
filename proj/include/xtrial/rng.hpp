#pragma once

#include <cmath>
#include <cstdint>

namespace xtrial {

// SplitMix64: a counter-based 64-bit generator. Each draw advances the
// counter by a fixed odd constant and scrambles it, so a stream is fully
// determined by its starting counter. Streams for parallel replicates are
// derived from (base_seed, stream_id) without any shared state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : state_(seed) {}

  // Stream `stream_id` of the family keyed by `base_seed`.
  static CounterRng stream(std::uint64_t base_seed, std::uint64_t stream_id) {
    return CounterRng(mix(mix(base_seed) + 0x9E3779B97F4A7C15ULL * (stream_id + 1)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller from two uniforms; the sine mate is discarded so each call
  // consumes exactly two draws.
  double normal(double mean = 0.0, double sd = 1.0) {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    return mean + sd * r * std::cos(two_pi * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace xtrial
