// SPDX-License-Identifier: Apache-2.0

#include "biortd/rng.h"

#include <cmath>
#include <numbers>

namespace biortd {

double Rng::Normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

double Rng::TruncatedNormal(double stddev) {
  for (;;) {
    const double z = Normal();
    if (std::abs(z) <= 2.0) return z * stddev;
  }
}

uint64_t Rng::Derive(uint64_t seed, uint64_t tag) {
  // splitmix64 finalizer over the combined words.
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace biortd
