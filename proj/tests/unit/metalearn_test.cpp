#include "functa/metalearn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "functa/data.hpp"
#include "functa/error.hpp"
#include "functa/nn.hpp"
#include "oracles.hpp"

using namespace functa;
using ad::Tensor;
using ad::Value;

namespace {

// Loss (phi - c)^2 summed over dimensions, independent of the network.
class QuadraticTask : public meta::FitTask {
 public:
  explicit QuadraticTask(Tensor c) : c_(std::move(c)) {}
  Value loss(const inr::LatentModulatedSiren&, const Value& phi, std::uint64_t) const override {
    return ad::sum(ad::square(ad::sub(phi, Value::constant(c_))));
  }
  double full_mse(const inr::LatentModulatedSiren&, const Tensor& phi) const override {
    return (phi - c_).squaredNorm() / static_cast<double>(c_.size());
  }

 private:
  Tensor c_;
};

inr::SirenConfig tiny_config() {
  inr::SirenConfig c;
  c.in_dim = 1;
  c.out_dim = 1;
  c.width = 4;
  c.depth = 2;
  c.omega0 = 3.0;
  return c;
}

std::vector<std::unique_ptr<meta::PointTask>> wave_tasks(int n, int points, std::uint64_t seed, int sample = 0) {
  auto coords = std::make_shared<Tensor>(Tensor(points, 1));
  for (int i = 0; i < points; ++i) (*coords)(i, 0) = -0.6 + 1.6 * i / (points - 1);
  Rng rng(seed);
  std::vector<std::unique_ptr<meta::PointTask>> out;
  for (int k = 0; k < n; ++k) {
    const double a = rng.uniform(0.1, 0.4), f = rng.uniform(1.0, 3.0);
    Tensor y = (coords->array() * f).sin() * a + 0.5;
    out.push_back(std::make_unique<meta::PointTask>(coords, y, sample));
  }
  return out;
}

template <class T>
std::vector<const meta::FitTask*> raw(const std::vector<std::unique_ptr<T>>& v) {
  std::vector<const meta::FitTask*> out;
  for (const auto& p : v) out.push_back(p.get());
  return out;
}

}  // namespace

TEST(InnerLoop, QuadraticSurrogateFixedLr) {
  const auto state = meta::MetaState::create(tiny_config(), 1, {3, 0.1, false}, 1e-3, 0);
  const double c = 1.7;
  QuadraticTask task(Tensor::Constant(1, 1, c));
  const auto r = meta::inner_loop_fit(state.model, state.inner_lrs, state.inner, task, 0);
  EXPECT_NEAR(r.phi.item(), 0.488 * c, 1e-12);
  ASSERT_EQ(r.losses.size(), 4u);
  ASSERT_EQ(r.trajectory.size(), 4u);
  EXPECT_NEAR(r.losses[0], c * c, 1e-12);
  EXPECT_NEAR(r.losses[3], std::pow(0.512 * c, 2), 1e-12);
}

TEST(InnerLoop, QuadraticSurrogateMetaSgd) {
  auto state = meta::MetaState::create(tiny_config(), 2, {3, 1e-2, true}, 1e-3, 0);
  Value(state.inner_lrs).mutable_data() << 0.1, 0.25;
  Tensor c(1, 2);
  c << 1.0, -2.0;
  QuadraticTask task(c);
  const auto r = meta::inner_loop_fit(state.model, state.inner_lrs, state.inner, task, 0, true);
  // Each dimension contracts by (1 - 2 lr) per step.
  EXPECT_NEAR(r.phi.data()(0, 0), 1.0 * (1 - std::pow(0.8, 3)), 1e-12);
  EXPECT_NEAR(r.phi.data()(0, 1), -2.0 * (1 - std::pow(0.5, 3)), 1e-12);
}

TEST(InnerLoop, FixedLearningRateWithoutMetaSgd) {
  // With meta-SGD off the step size is the fixed 1e-2 whatever inner_lrs holds.
  auto state = meta::MetaState::create(tiny_config(), 1, meta::InnerLoopConfig{1, 1e-2, false}, 1e-3, 0);
  Value(state.inner_lrs).mutable_data().setConstant(0.3);
  QuadraticTask task(Tensor::Constant(1, 1, 1.0));
  const auto r = meta::inner_loop_fit(state.model, state.inner_lrs, state.inner, task, 0);
  EXPECT_NEAR(r.phi.item(), 0.02, 1e-15);
  EXPECT_EQ(state.outer_parameters().size(), state.model.parameters().size());
}

TEST(InnerLoop, BaseNetworkIsNotModified) {
  const auto state = meta::MetaState::create(tiny_config(), 3, {}, 1e-3, 1);
  const auto tasks = wave_tasks(1, 16, 2);
  const std::string before = state.digest();
  const auto r = meta::inner_loop_fit(state.model, state.inner_lrs, state.inner, *tasks[0], 0, true);
  (void)nn::gradients(r.final_loss, state.outer_parameters());
  EXPECT_EQ(state.digest(), before);
  EXPECT_FALSE(r.trajectory.back().isZero());
}

TEST(InnerLoop, TrajectoryReplaysPlainGradientDescent) {
  const auto state = meta::MetaState::create(tiny_config(), 3, {4, 1e-2, true}, 1e-3, 3);
  const auto tasks = wave_tasks(1, 20, 4);
  const auto r = meta::inner_loop_fit(state.model, state.inner_lrs, state.inner, *tasks[0], 0);
  Tensor phi = Tensor::Zero(1, 3);
  for (int k = 0; k < 4; ++k) {
    ASSERT_TRUE(r.trajectory[static_cast<std::size_t>(k)].isApprox(phi, 1e-14) || phi.isZero());
    Value p = Value::parameter(phi);
    const Value loss = inr::recon_loss(state.model, p, tasks[0]->coords(), tasks[0]->targets());
    EXPECT_NEAR(loss.item(), r.losses[static_cast<std::size_t>(k)], 1e-14);
    phi = phi - state.inner_lrs.data().cwiseProduct(nn::gradients(loss, {p})[0]);
  }
  EXPECT_LT((r.trajectory.back() - phi).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(InnerLoop, NonFiniteLossThrows) {
  const auto state = meta::MetaState::create(tiny_config(), 1, {}, 1e-3, 0);
  QuadraticTask task(Tensor::Constant(1, 1, std::nan("")));
  EXPECT_THROW(meta::inner_loop_fit(state.model, state.inner_lrs, state.inner, task, 0), NumericalError);
}

TEST(InnerLoop, InitMetaSgdBounds) {
  const Tensor lrs = meta::init_meta_sgd(512, 9);
  EXPECT_GE(lrs.minCoeff(), 0.005);
  EXPECT_LE(lrs.maxCoeff(), 0.1);
  EXPECT_GT(lrs.maxCoeff() - lrs.minCoeff(), 0.08);
  EXPECT_TRUE(lrs.isApprox(meta::init_meta_sgd(512, 9)));
}

TEST(InnerLoop, PointSubsamplingIsSeeded) {
  const auto state = meta::MetaState::create(tiny_config(), 2, {}, 1e-3, 0);
  const auto tasks = wave_tasks(1, 64, 5, 8);
  const Value phi = Value::constant(Tensor::Zero(1, 2));
  EXPECT_EQ(tasks[0]->loss(state.model, phi, 3).item(), tasks[0]->loss(state.model, phi, 3).item());
  EXPECT_NE(tasks[0]->loss(state.model, phi, 3).item(), tasks[0]->loss(state.model, phi, 4).item());
}

// The unrolled second-order outer gradient against central differences of
// the post-inner-loop objective.
TEST(OuterLoop, GradientMatchesFiniteDifferences) {
  for (bool meta_sgd : {true, false}) {
    auto state = meta::MetaState::create(tiny_config(), 3, {2, 5e-2, meta_sgd}, 1e-3, 11);
    Value(state.inner_lrs).mutable_data() *= 3.0;
    const auto owned = wave_tasks(2, 12, 6);
    const auto batch = raw(owned);
    const std::vector<std::uint64_t> seeds{1, 2};
    auto params = state.outer_parameters();
    ASSERT_LE(nn::count_scalars(params), 200);
    const auto analytic = meta::meta_gradient(state, batch, seeds, 1);
    const auto numeric = functa::testing::finite_difference(
        [&](const std::vector<Tensor>& values) {
          for (std::size_t k = 0; k < params.size(); ++k) params[k].mutable_data() = values[k];
          return meta::meta_objective(state, batch, seeds);
        },
        nn::snapshot(params), 1e-5);
    EXPECT_LT(functa::testing::relative_error(analytic, numeric), 1e-3) << "meta_sgd=" << meta_sgd;
  }
}

TEST(OuterLoop, ZeroInnerStepsIsSupervisedGradient) {
  const auto state = meta::MetaState::create(tiny_config(), 3, {0, 1e-2, true}, 1e-3, 12);
  const auto owned = wave_tasks(1, 12, 7);
  const auto batch = raw(owned);
  const std::vector<std::uint64_t> seeds{0};
  const auto g = meta::meta_gradient(state, batch, seeds, 1);
  const Value loss = inr::recon_loss(state.model, Value::constant(Tensor::Zero(1, 3)), owned[0]->coords(),
                                     owned[0]->targets());
  const auto expected = nn::gradients(loss, state.model.parameters());
  for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_TRUE(g[k].isApprox(expected[k], 1e-14));
  EXPECT_TRUE(g.back().isZero());
}

TEST(OuterLoop, WorkersGiveIdenticalGradients) {
  const auto state = meta::MetaState::create(tiny_config(), 3, {}, 1e-3, 13);
  const auto owned = wave_tasks(5, 12, 8);
  const auto batch = raw(owned);
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto a = meta::meta_gradient(state, batch, seeds, 1);
  const auto b = meta::meta_gradient(state, batch, seeds, 4);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
}

TEST(OuterLoop, LearningRatesAreClipped) {
  auto state = meta::MetaState::create(tiny_config(), 2, {}, 1.0, 14);
  const auto owned = wave_tasks(1, 12, 9);
  const auto batch = raw(owned);
  const std::vector<std::uint64_t> seeds{0};
  Value(state.inner_lrs).mutable_data() << 1e-7, 1.0;
  // A unit outer step pushes lrs far past both ends of the allowed range.
  for (int i = 0; i < 5; ++i) meta::meta_step(state, batch, seeds);
  EXPECT_GE(state.inner_lrs.data().minCoeff(), meta::kMinInnerLr);
  EXPECT_LE(state.inner_lrs.data().maxCoeff(), meta::kMaxInnerLr);
  EXPECT_EQ(state.iter, 5);
}

TEST(OuterLoop, DivergenceAborts) {
  auto state = meta::MetaState::create(tiny_config(), 2, {}, 1e-3, 15);
  const auto owned = wave_tasks(1, 12, 9);
  const auto batch = raw(owned);
  const std::vector<std::uint64_t> seeds{0};
  try {
    meta::meta_step(state, batch, seeds, 1, 1e-12);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("outer iteration 0"), std::string::npos);
  }
}

TEST(OuterLoop, InvalidConfigRejected) {
  EXPECT_THROW(meta::MetaState::create(tiny_config(), 2, {-1, 1e-2, true}, 1e-3, 0), ConfigError);
  EXPECT_THROW(meta::MetaState::create(tiny_config(), 2, {}, 0.0, 0), ConfigError);
}

TEST(MetaTrain, ReducesLossAndIsDeterministic) {
  const auto owned = wave_tasks(8, 24, 10);
  const auto tasks = raw(owned);
  meta::MetaTrainConfig cfg;
  cfg.iters = 60;
  cfg.batch_size = 4;
  cfg.seed = 21;
  cfg.eval_every = 30;
  auto a = meta::MetaState::create(tiny_config(), 4, {3, 1e-2, true}, 1e-2, 5);
  auto b = meta::MetaState::create(tiny_config(), 4, {3, 1e-2, true}, 1e-2, 5);
  const auto ra = meta::meta_train(a, tasks, tasks, cfg);
  cfg.workers = 3;
  const auto rb = meta::meta_train(b, tasks, tasks, cfg);
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_EQ(ra.losses, rb.losses);
  ASSERT_EQ(ra.evals.size(), 3u);
  EXPECT_EQ(ra.evals.back().first, 60);
  EXPECT_GT(ra.evals.back().second.back(), ra.evals.front().second.back());
}

TEST(MetaTrain, TaskSeedsDiffer) {
  EXPECT_NE(meta::task_seed(1, 0, 0), meta::task_seed(1, 0, 1));
  EXPECT_NE(meta::task_seed(1, 0, 0), meta::task_seed(1, 1, 0));
  EXPECT_EQ(meta::task_seed(1, 2, 3), meta::task_seed(1, 2, 3));
}

TEST(Functaset, MetricsMatchStoredModulations) {
  const auto state = meta::MetaState::create(tiny_config(), 3, {}, 1e-3, 16);
  const auto owned = wave_tasks(6, 16, 11);
  const auto tasks = raw(owned);
  const std::vector<int> labels{0, 1, 0, 1, 0, 1};
  const Functaset set = meta::create_functaset(state, tasks, labels, "train", nullptr, 3, 2);
  ASSERT_EQ(set.size(), 6);
  EXPECT_EQ(set.base_digest, state.digest());
  EXPECT_EQ(set.labels, labels);
  double mean_psnr = 0.0;
  for (int i = 0; i < 6; ++i) {
    const Tensor phi = set.modulations.row(i);
    EXPECT_EQ(phi, round_to_float32(phi));
    const double mse = inr::mean_squared_error(state.model.evaluate(phi, owned[i]->coords()), owned[i]->targets());
    EXPECT_NEAR(set.metrics[static_cast<std::size_t>(i)], mse, 1e-15);
    mean_psnr += inr::psnr(mse) / 6.0;
  }
  const auto steps = meta::evaluate_steps(state, tasks, 3, 1);
  // Evaluation keeps phi in float64, so the PSNRs agree to float32 precision.
  EXPECT_NEAR(steps.mean_psnr().back(), mean_psnr, 1e-4);
}

TEST(Functaset, NonFiniteFitsAreExcluded) {
  const auto state = meta::MetaState::create(tiny_config(), 1, {}, 1e-3, 0);
  QuadraticTask good(Tensor::Constant(1, 1, 0.5)), bad(Tensor::Constant(1, 1, std::nan("")));
  const std::vector<const meta::FitTask*> tasks{&good, &bad, &good};
  const Functaset set = meta::create_functaset(state, tasks, {}, "train", nullptr, 0);
  EXPECT_EQ(set.size(), 2);
  EXPECT_EQ(set.excluded, std::vector<int>{1});
  EXPECT_EQ(set.source_index, (std::vector<int>{0, 2}));
}

TEST(Checkpoint, RoundTripResumesExactly) {
  const auto owned = wave_tasks(4, 12, 12);
  const auto tasks = raw(owned);
  meta::MetaTrainConfig cfg;
  cfg.iters = 3;
  cfg.batch_size = 2;
  auto a = meta::MetaState::create(tiny_config(), 3, {}, 1e-2, 7);
  meta::meta_train(a, tasks, {}, cfg);
  const auto path = std::filesystem::temp_directory_path() / "functa_meta_ckpt.bin";
  meta::save_checkpoint(path, a);
  auto b = meta::load_checkpoint(path);
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_EQ(b.iter, 3);
  EXPECT_EQ(a.inner_lrs.data(), b.inner_lrs.data());
  meta::meta_train(a, tasks, {}, cfg);
  meta::meta_train(b, tasks, {}, cfg);
  EXPECT_EQ(a.digest(), b.digest());
  std::filesystem::remove(path);
}

TEST(Functaset, AlreadyFitPointGivesZeroVector) {
  const auto state = meta::MetaState::create(tiny_config(), 4, {}, 1e-3, 0);
  QuadraticTask fit(Tensor::Zero(1, 4));
  const std::vector<const meta::FitTask*> tasks{&fit};
  const Functaset set = meta::create_functaset(state, tasks, {}, "train", nullptr, 0);
  EXPECT_TRUE(set.modulations.isZero(0.0));
}

TEST(Functaset, RefittingIsDeterministic) {
  const auto state = meta::MetaState::create(tiny_config(), 3, {}, 1e-3, 17);
  const auto owned = wave_tasks(1, 16, 13);
  const std::vector<const meta::FitTask*> twice{owned[0].get(), owned[0].get()};
  const Functaset set = meta::create_functaset(state, twice, {}, "train", nullptr, 0);
  const auto a = meta::inner_loop_fit(state.model, state.inner_lrs, state.inner, *owned[0], 0);
  const auto b = meta::inner_loop_fit(state.model, state.inner_lrs, state.inner, *owned[0], 0);
  EXPECT_EQ(a.phi.data(), b.phi.data());
  EXPECT_EQ(set.modulations.row(0), round_to_float32(a.phi.data()));
}
