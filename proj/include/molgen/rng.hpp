// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_RNG_HPP
#define MOLGEN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace molgen {

// Deterministic RNG used everywhere. Floating-point draws are derived from
// raw engine bits (not std::*_distribution) so streams are bit-stable across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 24 bits of mantissa.
  float uniform() {
    return static_cast<float>(eng_() >> 40) * (1.0f / 16777216.0f);
  }

  // Uniform in [lo, hi).
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) {  // in [0, n)
    return static_cast<int>(eng_() % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller; caches the second draw.
  float normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    float u1 = 0.0f;
    while (u1 <= 1e-12f) u1 = uniform();
    float u2 = uniform();
    float r = std::sqrt(-2.0f * std::log(u1));
    float a = 6.28318530717958647692f * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Samples an index from unnormalized non-negative weights by inverse CDF.
  int categorical(std::span<const float> w) {
    double total = 0.0;
    for (float x : w) total += x;
    double u = static_cast<double>(uniform()) * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1;
  }

  // Independent child stream; mixing keeps streams decorrelated regardless of
  // how many are forked from one master seed.
  Rng fork(std::uint64_t stream) const {
    std::uint64_t x = seed_mix_ + 0x9E3779B97F4A7C15ull * (stream + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return Rng(x);
  }

  void set_fork_base(std::uint64_t base) { seed_mix_ = base; }

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_mix_ = 0;
  float spare_ = 0.0f;
  bool has_spare_ = false;
};

inline Rng make_rng(std::uint64_t seed) {
  Rng r(seed);
  r.set_fork_base(seed);
  return r;
}

}  // namespace molgen

#endif  // MOLGEN_RNG_HPP
