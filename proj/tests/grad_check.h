// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checks shared by the unit and
// acceptance tests.

#ifndef BIORTD_TESTS_GRAD_CHECK_H_
#define BIORTD_TESTS_GRAD_CHECK_H_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "biortd/autodiff.h"
#include "biortd/rng.h"

namespace biortd::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<input>[<index>]: analytic vs numeric"
  int checked = 0;
};

// Error measure for one coordinate. Coordinates where both estimates are
// below `zero` agree: some gradients vanish identically (a key bias cannot
// change softmax output) and central differences then return rounding noise.
inline double RelativeError(double analytic, double numeric, double zero = 1e-7) {
  if (std::abs(analytic) < zero && std::abs(numeric) < zero) return 0.0;
  return std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
}

// Compares the tape gradient of loss() with respect to each input against
// central differences. When max_per_input > 0 only that many coordinates of
// each input (chosen by `rng`) are perturbed.
inline GradCheckResult CheckGradients(
    const std::vector<std::pair<std::string, ad::Tensor<double>>>& inputs,
    const std::function<ad::Tensor<double>()>& loss, double step = 1e-6,
    int max_per_input = 0, uint64_t seed = 1) {
  for (const auto& [name, t] : inputs) {
    auto in = t;
    in.set_requires_grad(true);
    in.ZeroGrad();
  }
  {
    ad::Tape<double> tape;
    ad::TapeScope<double> scope(tape);
    auto value = loss();
    tape.Backward(value);
  }
  Rng rng(seed);
  GradCheckResult result;
  for (const auto& [name, t] : inputs) {
    auto in = t;
    std::vector<double> analytic(in.grad().begin(), in.grad().end());
    if (analytic.empty()) analytic.assign(static_cast<size_t>(in.numel()), 0.0);
    std::vector<int64_t> coords;
    const int64_t n = in.numel();
    if (max_per_input <= 0 || n <= max_per_input) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_per_input; ++i) {
        coords.push_back(static_cast<int64_t>(rng.Below(static_cast<uint64_t>(n))));
      }
    }
    for (int64_t i : coords) {
      double& x = in.data()[static_cast<size_t>(i)];
      const double saved = x;
      x = saved + step;
      const double plus = loss().item();
      x = saved - step;
      const double minus = loss().item();
      x = saved;
      const double numeric = (plus - minus) / (2 * step);
      const double err = RelativeError(analytic[static_cast<size_t>(i)], numeric);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        char buf[96];
      std::snprintf(buf, sizeof(buf), "]: %.6g vs %.6g", analytic[static_cast<size_t>(i)],
                    numeric);
      result.worst = name + "[" + std::to_string(i) + buf;
      }
    }
  }
  return result;
}

inline ad::Tensor<double> RandomTensor(ad::Shape shape, Rng& rng, double scale = 1.0) {
  auto t = ad::Tensor<double>::Zeros(std::move(shape));
  for (double& v : t.data()) v = scale * rng.Normal();
  return t;
}

}  // namespace biortd::testing

#endif  // BIORTD_TESTS_GRAD_CHECK_H_
