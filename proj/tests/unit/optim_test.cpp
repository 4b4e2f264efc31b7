#include <gtest/gtest.h>

#include <cmath>

#include "functa/ad.hpp"
#include "functa/error.hpp"
#include "functa/optim.hpp"

namespace {

using functa::AdamState;
using functa::LrSchedule;
using functa::ad::Tensor;
using functa::ad::Value;

TEST(Adam, ZeroGradientsLeaveParamsUnchangedAndCountStep) {
  std::vector<Value> p{Value::parameter(Tensor::Constant(2, 2, 1.5))};
  std::vector<Tensor> g{Tensor::Zero(2, 2)};
  AdamState s;
  functa::adam_step(p, g, s, 1e-2);
  EXPECT_EQ(s.t, 1);
  EXPECT_TRUE(p[0].data().isApprox(Tensor::Constant(2, 2, 1.5)));
}

TEST(Adam, FirstStepHasMagnitudeLr) {
  // Hand computation: m = 0.1 g, v = 0.001 g^2, bias-corrected m/sqrt(v) = sign(g).
  std::vector<Value> p{Value::parameter((Tensor(1, 3) << 1.0, -2.0, 0.5).finished())};
  std::vector<Tensor> g{(Tensor(1, 3) << 0.3, -4.0, 1e-3).finished()};
  AdamState s;
  functa::adam_step(p, g, s, 0.01);
  for (int i = 0; i < 3; ++i) {
    const double g_i = g[0](0, i);
    const double expected = 0.01 * std::abs(g_i) / (std::abs(g_i) + 1e-8);
    const double before = i == 0 ? 1.0 : (i == 1 ? -2.0 : 0.5);
    EXPECT_NEAR(before - p[0].data()(0, i), std::copysign(expected, g_i), 1e-12);
  }
}

TEST(Adam, TwoStepsReduceQuadratic) {
  Value x = Value::parameter(Tensor::Constant(1, 1, 3.0));
  std::vector<Value> p{x};
  AdamState s;
  auto loss = [&] { return (x.data()(0, 0) - 1.0) * (x.data()(0, 0) - 1.0); };
  const double l0 = loss();
  for (int k = 0; k < 2; ++k) {
    std::vector<Tensor> g{Tensor::Constant(1, 1, 2.0 * (x.data()(0, 0) - 1.0))};
    functa::adam_step(p, g, s, 0.1);
  }
  EXPECT_LT(loss(), l0);
  EXPECT_EQ(s.t, 2);
}

TEST(Adam, NonFiniteGradientAbortsWithDiagnostics) {
  std::vector<Value> p{Value::parameter(Tensor::Zero(1, 2)), Value::parameter(Tensor::Zero(1, 2))};
  std::vector<Tensor> g{Tensor::Zero(1, 2), (Tensor(1, 2) << 0.0, std::nan("")).finished()};
  AdamState s;
  try {
    functa::adam_step(p, g, s, 0.1);
    FAIL() << "expected NumericalError";
  } catch (const functa::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("parameter 1"), std::string::npos);
  }
  EXPECT_EQ(s.t, 0);
  EXPECT_EQ(p[0].data().norm(), 0.0);
}

TEST(Adam, ShapeMismatchIsRejected) {
  std::vector<Value> p{Value::parameter(Tensor::Zero(1, 2))};
  std::vector<Tensor> g{Tensor::Zero(2, 1)};
  AdamState s;
  EXPECT_THROW(functa::adam_step(p, g, s, 0.1), functa::ContractViolation);
}

TEST(Schedule, KnownValues) {
  const LrSchedule s{3e-4, 4000};
  EXPECT_DOUBLE_EQ(functa::schedule_lr(0, s), 0.0);
  EXPECT_DOUBLE_EQ(functa::schedule_lr(2000, s), 1.5e-4);
  EXPECT_DOUBLE_EQ(functa::schedule_lr(4000, s), 3e-4);
  EXPECT_NEAR(functa::schedule_lr(16000, s), 1.5e-4, 1e-18);
}

TEST(Schedule, ContinuousAtWarmupAndNonIncreasingAfter) {
  const LrSchedule s{3e-4, 4000};
  EXPECT_NEAR(functa::schedule_lr(3999, s), functa::schedule_lr(4000, s), 3e-4 / 4000 + 1e-15);
  EXPECT_NEAR(functa::schedule_lr(4001, s), functa::schedule_lr(4000, s), 1e-7);
  double prev = functa::schedule_lr(4000, s);
  for (long it = 4001; it < 50000; it += 997) {
    const double lr = functa::schedule_lr(it, s);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(Schedule, NoWarmupIsConstant) {
  const LrSchedule s{1e-3, 0};
  EXPECT_DOUBLE_EQ(functa::schedule_lr(0, s), 1e-3);
  EXPECT_DOUBLE_EQ(functa::schedule_lr(12345, s), 1e-3);
}

TEST(Schedule, NegativeIterationIsRejected) {
  EXPECT_THROW(functa::schedule_lr(-1, LrSchedule{}), functa::ContractViolation);
}

}  // namespace
