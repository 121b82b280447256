// SPDX-License-Identifier: Apache-2.0

#ifndef BIORTD_RNG_H_
#define BIORTD_RNG_H_

#include <cstdint>
#include <random>

namespace biortd {

// Seedable generator driving initialization, dropout, masking and sampling.
// Distributions are implemented here rather than with <random> adaptors so
// that streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Lemire-style rejection keeps it unbiased.
  uint64_t Below(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  double Normal();

  // Normal(0, stddev) truncated to [-2 stddev, 2 stddev] by rejection.
  double TruncatedNormal(double stddev);

  // Derives an independent stream seed from a base seed and a tag.
  static uint64_t Derive(uint64_t seed, uint64_t tag);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace biortd

#endif  // BIORTD_RNG_H_
