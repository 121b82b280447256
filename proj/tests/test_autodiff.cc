// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "biortd/autodiff.h"
#include "primitive_checks.h"

using namespace biortd;
using T = ad::Tensor<double>;

TEST_CASE("every primitive passes a 64-bit finite-difference check") {
  for (const auto& check : testing::PrimitiveChecks()) {
    const auto result = check.run();
    INFO(check.name << ": " << result.worst);
    CHECK(result.checked > 0);
    CHECK(result.max_rel_error < testing::kGradTolerance);
  }
}

TEST_CASE("loss values against direct formulas") {
  T logits = T::FromVector({2, 3}, {1.0, 2.0, 3.0, 0.5, -1.0, 0.0});
  std::vector<int32_t> targets = {2, 0};
  const double lse0 = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  const double lse1 = std::log(std::exp(0.5) + std::exp(-1.0) + std::exp(0.0));
  const double expected = 0.5 * ((lse0 - 3.0) + (lse1 - 0.5));
  CHECK(ad::CrossEntropy(logits, targets).item() == doctest::Approx(expected).epsilon(1e-12));

  T z = T::FromVector({3}, {0.3, -2.0, 5.0});
  std::vector<int32_t> y = {1, 0, -1};
  const double b0 = std::log1p(std::exp(-0.3));
  const double b1 = std::log1p(std::exp(-2.0));  // label 0: log(1 + e^z)
  CHECK(ad::BinaryCrossEntropy(z, y).item() == doctest::Approx((b0 + b1) / 2).epsilon(1e-12));
}

TEST_CASE("gelu is the erf form") {
  T x = T::FromVector({3}, {-1.5, 0.0, 2.0});
  auto y = ad::Gelu(x);
  for (int i = 0; i < 3; ++i) {
    const double v = x.data()[i];
    CHECK(y.data()[i] == doctest::Approx(0.5 * v * (1 + std::erf(v / std::sqrt(2.0)))));
  }
}

TEST_CASE("masked keys get zero attention and a fully masked row is zero") {
  T scores = T::FromVector({1, 1, 1, 3}, {0.2, 5.0, -1.0});
  std::vector<int32_t> mask = {1, 0, 1};
  auto p = ad::Softmax(ad::AddKeyMask(scores, mask));
  CHECK(p.data()[1] == 0.0);
  CHECK(p.data()[0] + p.data()[2] == doctest::Approx(1.0));
  std::vector<int32_t> none = {0, 0, 0};
  auto z = ad::Softmax(ad::AddKeyMask(scores, none));
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("dropout is identity in evaluation and scales kept units in training") {
  Rng rng(6);
  T x = T::Full({1000}, 1.0);
  auto eval = ad::Dropout(x, 0.1, &rng, false);
  CHECK(eval.SharesStorageWith(x));
  auto train = ad::Dropout(x, 0.25, &rng, true);
  int kept = 0;
  for (double v : train.data()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    kept += v != 0.0;
  }
  CHECK(kept > 650);
  CHECK(kept < 850);
}

TEST_CASE("gradients accumulate over reused inputs and leaves without use stay zero") {
  T a = T::FromVector({2}, {1.0, 2.0}, true);
  T unused = T::FromVector({2}, {3.0, 4.0}, true);
  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    auto loss = ad::Sum(ad::Add(ad::Mul(a, a), a));  // sum(a^2 + a)
    tape.Backward(loss);
  }
  CHECK(a.grad()[0] == doctest::Approx(3.0));
  CHECK(a.grad()[1] == doctest::Approx(5.0));
  CHECK_FALSE(unused.has_grad());
}

TEST_CASE("no tape records nothing") {
  T a = T::FromVector({2}, {1.0, 2.0}, true);
  auto y = ad::Mul(a, a);
  CHECK(y.data()[1] == 4.0);
  CHECK(ad::ActiveTape<double>() == nullptr);
}

TEST_CASE("shape errors name the shapes") {
  T a = T::Zeros({2, 3}), b = T::Zeros({4, 5});
  CHECK_THROWS_AS(ad::MatMul(a, b), ad::ShapeError);
  CHECK_THROWS_AS(ad::Add(a, b), ad::ShapeError);
}
