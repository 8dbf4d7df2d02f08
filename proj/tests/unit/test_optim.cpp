#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "protomil/error.hpp"
#include "protomil/optim.hpp"

using namespace protomil;

TEST(Adam, FirstStepMovesByLearningRate) {
  // After bias correction the first step is lr * g / (|g| + eps).
  std::vector<double> x{1.0, -2.0, 3.0};
  const std::vector<double> g{0.5, -4.0, 1e-3};
  AdamState s(3);
  GroupConfig cfg;
  cfg.lr = 0.01;
  adam_step(x, g, s, cfg);
  EXPECT_NEAR(x[0], 1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(x[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_NEAR(x[2], 3.0 - 0.01 * 1e-3 / (1e-3 + 1e-8), 1e-15);
  EXPECT_EQ(s.t, 1u);
}

TEST(Adam, ZeroGradientLeavesParametersAlone) {
  std::vector<double> x{1.5, -0.5};
  const std::vector<double> g{0.0, 0.0};
  AdamState s(2);
  GroupConfig cfg;
  for (int i = 0; i < 5; ++i) adam_step(x, g, s, cfg);
  EXPECT_EQ(x, (std::vector<double>{1.5, -0.5}));
  EXPECT_EQ(s.t, 5u);
}

TEST(Adam, QuadraticMatchesScalarOracle) {
  for (double lr : {1e-3, 0.1, 0.5}) {
    std::vector<double> x{3.0};
    AdamState s(1);
    GroupConfig cfg;
    cfg.lr = lr;
    oracle::ScalarAdam ref{lr};
    double y = 3.0;
    for (int i = 0; i < 10; ++i) {
      const std::vector<double> g{2.0 * x[0]};
      adam_step(x, g, s, cfg);
      y = ref.step(y, 2.0 * y);
      EXPECT_NEAR(x[0], y, 1e-12) << "lr " << lr << " step " << i;
    }
  }
}

TEST(Adam, RandomBlocksMatchOracleAndAreDeterministic) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t size = 1 + rng() % 20;
    GroupConfig cfg;
    cfg.lr = 1e-3 * (1 + rng() % 100);
    cfg.beta1 = 0.5 + 0.4 * static_cast<double>(rng() % 2);
    std::vector<double> x(size), x2;
    for (double& v : x) v = n(rng);
    x2 = x;
    std::vector<oracle::ScalarAdam> ref(size, oracle::ScalarAdam{cfg.lr, cfg.beta1});
    std::vector<double> y = x;
    AdamState s(size), s2(size);
    for (int step = 0; step < 20; ++step) {
      std::vector<double> g(size);
      for (double& v : g) v = n(rng);
      adam_step(x, g, s, cfg);
      adam_step(x2, g, s2, cfg);
      for (std::size_t i = 0; i < size; ++i) y[i] = ref[i].step(y[i], g[i]);
    }
    EXPECT_EQ(x, x2);
    EXPECT_EQ(s, s2);
    for (std::size_t i = 0; i < size; ++i) EXPECT_NEAR(x[i], y[i], 1e-12);
  }
}

TEST(Adam, StepSizeIgnoresGradientScale) {
  std::vector<double> a{0.0}, b{0.0};
  AdamState sa(1), sb(1);
  GroupConfig cfg;
  for (int i = 0; i < 3; ++i) {
    const std::vector<double> ga{1.0}, gb{1000.0};
    adam_step(a, ga, sa, cfg);
    adam_step(b, gb, sb, cfg);
  }
  EXPECT_NEAR(a[0], b[0], 1e-10);
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
  std::vector<double> x{1.0, 2.0};
  AdamState s(2);
  GroupConfig cfg;
  const std::vector<double> ok{0.1, 0.2};
  adam_step(x, ok, s, cfg);
  const auto x_before = x;
  const AdamState s_before = s;
  for (double bad : {std::numeric_limits<double>::quiet_NaN(),
                     std::numeric_limits<double>::infinity()}) {
    const std::vector<double> g{0.1, bad};
    EXPECT_THROW(adam_step(x, g, s, cfg), NonFiniteGradient);
    EXPECT_EQ(x, x_before);
    EXPECT_EQ(s, s_before);
  }
}

TEST(Adam, ShapeMismatchAndConfigValidation) {
  std::vector<double> x{1.0, 2.0};
  const std::vector<double> g{0.1};
  AdamState s(2);
  EXPECT_THROW(adam_step(x, g, s, GroupConfig{}), std::invalid_argument);
  GroupConfig cfg;
  cfg.beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = {};
  cfg.eps = 0.0;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = {};
  cfg.lr = -1.0;
  EXPECT_THROW(cfg.validate(), UsageError);
  EXPECT_NO_THROW(GroupConfig{}.validate());
}
