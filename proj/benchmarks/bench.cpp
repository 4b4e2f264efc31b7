#include <benchmark/benchmark.h>

#include <memory>

#include "functa/classify.hpp"
#include "functa/data.hpp"
#include "functa/diffusion.hpp"
#include "functa/flow.hpp"
#include "functa/inr.hpp"
#include "functa/metalearn.hpp"
#include "functa/render.hpp"
#include "functa/rng.hpp"

using namespace functa;

namespace {

inr::SirenConfig image_siren(int width, int depth) {
  inr::SirenConfig c;
  c.in_dim = 2;
  c.out_dim = 1;
  c.width = width;
  c.depth = depth;
  return c;
}

ad::Tensor gaussian(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  ad::Tensor t(rows, cols);
  for (ad::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
  return t;
}

// Graph-free evaluation of a modulated SIREN on a 32x32 grid.
void BM_SirenEvaluate(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const auto model = inr::LatentModulatedSiren::create(image_siren(width, 4), 64, 0);
  const auto grid = data::grid_2d(32, 32);
  const ad::Tensor phi = gaussian(1, 64, 1) * 0.1;
  for (auto _ : state) benchmark::DoNotOptimize(model.evaluate(phi, grid.coords));
  state.SetItemsProcessed(state.iterations() * grid.size());
}
BENCHMARK(BM_SirenEvaluate)->Arg(32)->Arg(64)->Arg(128);

// Outer gradient through the unrolled three-step inner loop, one 32x32 image.
void BM_MetaGradient(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  auto meta_state = meta::MetaState::create(image_siren(width, 3), 32, meta::InnerLoopConfig{}, 3e-6, 0);
  data::SyntheticSpec spec;
  spec.resolution = 32;
  auto coords = std::make_shared<const ad::Tensor>(data::make_grid(spec).coords);
  const meta::PointTask task(coords, data::make_item(spec, 0).targets);
  const meta::FitTask* batch[] = {&task};
  const std::uint64_t seeds[] = {0};
  for (auto _ : state) benchmark::DoNotOptimize(meta::meta_gradient(meta_state, batch, seeds, 1));
}
BENCHMARK(BM_MetaGradient)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_FlowLogProb(benchmark::State& state) {
  flow::FlowConfig c;
  c.dim = static_cast<int>(state.range(0));
  c.num_layers = 4;
  c.hidden = 128;
  Rng rng(0);
  auto model = flow::FlowModel::create(c, 0);
  for (auto& p : model.parameters()) {
    for (ad::Index i = 0; i < p.data().size(); ++i) p.mutable_data().data()[i] += 0.05 * rng.normal();
  }
  const ad::Tensor x = gaussian(256, c.dim, 1) * 0.25;
  for (auto _ : state) benchmark::DoNotOptimize(model.log_prob(x));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_FlowLogProb)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_FlowTrainStep(benchmark::State& state) {
  flow::FlowConfig c;
  c.dim = 32;
  c.num_layers = 4;
  c.hidden = 128;
  auto model = flow::FlowModel::create(c, 0);
  const ad::Tensor data = gaussian(512, c.dim, 1) * 0.25;
  flow::FlowTrainConfig tc;
  tc.iters = 1;
  tc.batch_size = 128;
  for (auto _ : state) benchmark::DoNotOptimize(flow::train_flow(model, data, {}, tc));
}
BENCHMARK(BM_FlowTrainStep)->Unit(benchmark::kMillisecond);

void BM_DdpmReverseStep(benchmark::State& state) {
  diffusion::EpsNetConfig c;
  c.dim = 64;
  c.width = 256;
  c.blocks = 4;
  const auto model = diffusion::DdpmModel::create(c, 0);
  const ad::Tensor x = gaussian(128, c.dim, 1);
  const ad::Tensor noise = gaussian(128, c.dim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(diffusion::p_sample_step(model, x, 500, noise));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_DdpmReverseStep)->Unit(benchmark::kMicrosecond);

// Full 32x32 view of a modulated SIREN scene, 32 samples per ray.
void BM_RenderImage(benchmark::State& state) {
  inr::SirenConfig sc;
  sc.in_dim = 3;
  sc.out_dim = 4;
  sc.width = 64;
  sc.depth = 4;
  const auto model = inr::LatentModulatedSiren::create(sc, 32, 0);
  const auto scene = render::siren_scene(model, ad::Value::constant(ad::Tensor::Zero(1, 32)));
  render::RenderConfig rc;
  rc.height = 32;
  rc.width = 32;
  rc.near = 1.25;
  rc.far = 2.75;
  const auto pose = render::look_at({2.0, 0.0, 0.5}, {0.0, 0.0, 0.0}, 32.0);
  for (auto _ : state) benchmark::DoNotOptimize(render::render_image(scene, pose, rc));
  state.SetItemsProcessed(state.iterations() * rc.height * rc.width);
}
BENCHMARK(BM_RenderImage)->Unit(benchmark::kMillisecond);

void BM_ClassifierPredict(benchmark::State& state) {
  classify::ClassifierConfig c;
  c.input_dim = 256;
  NormStats stats;
  stats.mean = ad::Tensor::Zero(1, 256);
  stats.std = ad::Tensor::Ones(1, 256);
  const auto model = classify::Classifier::create(c, stats);
  const ad::Tensor x = gaussian(1024, 256, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_ClassifierPredict)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
