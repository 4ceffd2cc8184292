// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>

#include "plm/common.hpp"

namespace plm {

/// Counter-based pseudo-random generator. The n-th draw is a pure function
/// of (key, n), so streams are reproducible across platforms, and split()
/// derives an independent child stream from a name without disturbing the
/// parent. All pipeline randomness flows from one root seed through splits.
class Rng {
public:
  explicit Rng(uint64_t seed) : key_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  Rng split(std::string_view name) const {
    Rng child(0);
    child.key_ = mix(key_ ^ fnv1a(name));
    child.counter_ = 0;
    return child;
  }

  Rng split(uint64_t index) const {
    Rng child(0);
    child.key_ = mix(key_ ^ mix(index + 0x632be59bd9b4e019ULL));
    child.counter_ = 0;
    return child;
  }

  uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; one fresh draw per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) fail("Rng::uniform_int: n must be positive");
    return next_u64() % n;
  }

  /// Index drawn from unnormalized non-negative weights.
  size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) fail("Rng::categorical: weights must have positive mass");
    double u = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.size() - 1;
  }

  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

private:
  static uint64_t mix(uint64_t z) {
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace plm
