#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace nsf {

// Counter-based splitmix64 stream. The algorithm identity is fixed so that a
// reimplementation in another language can reproduce the same distributional
// behavior: state advances by the golden-ratio gamma, outputs are the usual
// splitmix64 finalizer, uniforms take the top 53 bits, and normals come from
// the Box-Muller transform on consecutive uniform pairs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool next_bool() { return (next_u64() & 1ULL) != 0; }

  // Uniform integer in [0, bound). Bound must be positive.
  std::uint64_t next_below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(next_double() * static_cast<double>(bound));
  }

  double next_gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Derive an independent stream, e.g. one per pipeline stage or seed index.
  Rng fork(std::uint64_t stream_id) const {
    Rng mixer(state_ ^ (0x632be59bd9b4e019ULL * (stream_id + 1)));
    return Rng(mixer.next_u64());
  }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace nsf
