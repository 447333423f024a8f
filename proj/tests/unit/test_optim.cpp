// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "modalbridge/ops.hpp"
#include "modalbridge/optim.hpp"

namespace modalbridge {
namespace {

// Hand-unrolled recurrence in double for comparison.
struct Reference {
  double param, velocity = 0.0;
  void step(double grad, const SgdSettings& s) {
    velocity = s.momentum * velocity + grad + s.weight_decay * param;
    param -= s.lr * velocity;
  }
};

TEST(Sgd, MatchesMomentumRecurrenceWithDecay) {
  const SgdSettings s{0.1f, 0.9f, 0.01f};
  Tensor w = Tensor::from({2}, {1.0f, -0.5f}, true);
  Sgd opt({w}, s);
  Reference r0{1.0}, r1{-0.5};
  for (int it = 0; it < 6; ++it) {
    opt.zero_grad();
    // loss = sum(w^2) so grad = 2w.
    sum_all(mul(w, w)).backward();
    r0.step(2.0 * r0.param, s);
    r1.step(2.0 * r1.param, s);
    opt.step();
    EXPECT_NEAR(w.data()[0], r0.param, 1e-6);
    EXPECT_NEAR(w.data()[1], r1.param, 1e-6);
    EXPECT_NEAR(opt.velocity(0)[0], r0.velocity, 1e-6);
  }
}

TEST(Sgd, ZeroMomentumIsPlainGradientDescent) {
  Tensor w = Tensor::from({1}, {2.0f}, true);
  Sgd opt({w}, {0.25f, 0.0f, 0.0f});
  sum_all(w).backward();
  opt.step();
  EXPECT_FLOAT_EQ(w.data()[0], 1.75f);
}

TEST(Sgd, MissingGradientIsAnError) {
  Tensor a = Tensor::from({1}, {1.0f}, true);
  Tensor b = Tensor::from({3}, {1.0f, 2.0f, 3.0f}, true);
  Sgd opt({a, b}, {});
  sum_all(a).backward();
  try {
    opt.step();
    FAIL() << "expected GradError";
  } catch (const GradError& e) {
    EXPECT_NE(std::string(e.what()).find("[3]"), std::string::npos);
  }
  // Nothing moved on failure.
  EXPECT_EQ(a.data()[0], 1.0f);
}

TEST(Sgd, LearningRateCanBeChangedBetweenSteps) {
  Tensor w = Tensor::from({1}, {0.0f}, true);
  Sgd opt({w}, {1.0f, 0.0f, 0.0f});
  sum_all(w).backward();
  opt.set_lr(0.5f);
  opt.step();
  EXPECT_FLOAT_EQ(w.data()[0], -0.5f);
}

}  // namespace
}  // namespace modalbridge
