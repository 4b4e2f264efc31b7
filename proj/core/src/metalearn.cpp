#include "functa/metalearn.hpp"

#include <cmath>
#include <string>

#include "functa/archive.hpp"
#include "functa/error.hpp"
#include "functa/nn.hpp"
#include "functa/rng.hpp"
#include "parallel.hpp"

namespace functa::meta {

namespace {

constexpr const char* kCheckpointKind = "meta";
constexpr int kCheckpointVersion = 1;

ad::Tensor clip_lrs(const ad::Tensor& lrs) { return lrs.cwiseMax(kMinInnerLr).cwiseMin(kMaxInnerLr); }

}  // namespace

void InnerLoopConfig::validate() const {
  if (n_inner < 0) throw ConfigError("n_inner must be >= 0");
  if (!(fixed_lr > 0.0)) throw ConfigError("inner learning rate must be positive");
}

// ---------------------------------------------------------------------------
// Tasks

PointTask::PointTask(std::shared_ptr<const ad::Tensor> coords, ad::Tensor targets, int sample_points)
    : coords_(std::move(coords)), targets_(std::move(targets)), sample_points_(sample_points) {
  require(coords_ && coords_->rows() == targets_.rows() && coords_->rows() > 0,
          "PointTask: coordinates and targets must be aligned and non-empty");
  require(sample_points_ >= 0, "PointTask: negative sample size");
}

ad::Value PointTask::loss(const inr::LatentModulatedSiren& model, const ad::Value& phi,
                          std::uint64_t seed) const {
  if (sample_points_ == 0 || sample_points_ >= coords_->rows()) {
    return inr::recon_loss(model, phi, *coords_, targets_);
  }
  Rng rng(seed);
  const auto idx = rng.choose(static_cast<int>(coords_->rows()), sample_points_);
  ad::Tensor x(sample_points_, coords_->cols()), y(sample_points_, targets_.cols());
  for (int i = 0; i < sample_points_; ++i) {
    x.row(i) = coords_->row(idx[static_cast<std::size_t>(i)]);
    y.row(i) = targets_.row(idx[static_cast<std::size_t>(i)]);
  }
  return inr::recon_loss(model, phi, x, y);
}

double PointTask::full_mse(const inr::LatentModulatedSiren& model, const ad::Tensor& phi) const {
  return inr::mean_squared_error(model.evaluate(phi, *coords_), targets_);
}

SceneTask::SceneTask(std::vector<render::View> views, render::RenderConfig config, render::Subsample subsample)
    : views_(std::move(views)), config_(config), subsample_(subsample) {
  require(!views_.empty(), "SceneTask: no views");
  config_.validate();
}

ad::Value SceneTask::loss(const inr::LatentModulatedSiren& model, const ad::Value& phi,
                          std::uint64_t seed) const {
  return render::scene_recon_loss(render::siren_scene(model, phi), views_, subsample_, config_, seed);
}

double SceneTask::full_mse(const inr::LatentModulatedSiren& model, const ad::Tensor& phi) const {
  ad::NoGradGuard no_grad;
  const auto scene = render::siren_scene(model, ad::Value::constant(phi));
  double sse = 0.0;
  double count = 0.0;
  for (const auto& v : views_) {
    sse += (render::render_image(scene, v.pose, config_) - v.image).squaredNorm();
    count += static_cast<double>(v.image.size());
  }
  return sse / count;
}

// ---------------------------------------------------------------------------
// Inner loop

InnerResult inner_loop_fit(const inr::LatentModulatedSiren& model, const ad::Value& inner_lrs,
                           const InnerLoopConfig& cfg, const FitTask& task, std::uint64_t seed,
                           bool create_graph) {
  cfg.validate();
  const int latent = model.latent_dim();
  if (cfg.use_meta_sgd) {
    require(inner_lrs.defined() && inner_lrs.rows() == 1 && inner_lrs.cols() == latent,
            "inner_loop_fit: inner learning rates must be 1 x latent_dim");
  }
  InnerResult r;
  ad::Value phi = ad::Value::parameter(ad::Tensor::Zero(1, latent));
  r.trajectory.push_back(phi.data());
  for (int step = 0; step <= cfg.n_inner; ++step) {
    const ad::Value loss = task.loss(model, phi, seed);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw NumericalError("inner loop: non-finite loss at step " + std::to_string(step));
    }
    r.losses.push_back(value);
    if (step == cfg.n_inner) {
      r.final_loss = loss;
      break;
    }
    const ad::Value g = ad::grad(loss, std::vector<ad::Value>{phi}, create_graph)[0];
    if (create_graph) {
      const ad::Value update = cfg.use_meta_sgd ? ad::mul(inner_lrs, g) : ad::scale(g, cfg.fixed_lr);
      phi = ad::sub(phi, update);
    } else {
      const ad::Tensor lr = cfg.use_meta_sgd ? inner_lrs.data() : ad::Tensor::Constant(1, latent, cfg.fixed_lr);
      phi = ad::Value::parameter(phi.data() - lr.cwiseProduct(g.data()));
    }
    r.trajectory.push_back(phi.data());
  }
  r.phi = phi;
  return r;
}

ad::Tensor init_meta_sgd(int latent_dim, std::uint64_t seed) {
  require(latent_dim >= 1, "init_meta_sgd: latent_dim must be >= 1");
  Rng rng(seed);
  ad::Tensor lrs(1, latent_dim);
  for (ad::Index i = 0; i < lrs.size(); ++i) lrs.data()[i] = rng.uniform(0.005, 0.1);
  return lrs;
}

// ---------------------------------------------------------------------------
// Outer loop

MetaState MetaState::create(const inr::SirenConfig& config, int latent_dim, const InnerLoopConfig& inner,
                            double outer_lr, std::uint64_t seed) {
  inner.validate();
  if (!(outer_lr > 0.0)) throw ConfigError("outer learning rate must be positive");
  MetaState s;
  s.model = inr::LatentModulatedSiren::create(config, latent_dim, seed);
  s.inner_lrs = ad::Value::parameter(init_meta_sgd(latent_dim, mix_seed(seed, 2)));
  s.inner = inner;
  s.outer_lr = outer_lr;
  return s;
}

std::vector<ad::Value> MetaState::outer_parameters() const {
  auto params = model.parameters();
  if (inner.use_meta_sgd) params.push_back(inner_lrs);
  return params;
}

double meta_objective(const MetaState& state, std::span<const FitTask* const> batch,
                      std::span<const std::uint64_t> seeds) {
  require(!batch.empty() && batch.size() == seeds.size(), "meta_objective: batch and seeds must align");
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    total += inner_loop_fit(state.model, state.inner_lrs, state.inner, *batch[b], seeds[b], false).losses.back();
  }
  return total / static_cast<double>(batch.size());
}

std::vector<ad::Tensor> meta_gradient(const MetaState& state, std::span<const FitTask* const> batch,
                                      std::span<const std::uint64_t> seeds, int workers,
                                      MetaStepResult* result) {
  require(!batch.empty(), "meta_step: empty batch");
  require(batch.size() == seeds.size(), "meta_step: one seed per task required");
  const auto params = state.outer_parameters();
  const int n = static_cast<int>(batch.size());
  std::vector<std::vector<ad::Tensor>> per_task(batch.size());
  std::vector<std::vector<double>> losses(batch.size());
  detail::parallel_for(n, workers, [&](int b) {
    const auto bi = static_cast<std::size_t>(b);
    const InnerResult r = inner_loop_fit(state.model, state.inner_lrs, state.inner, *batch[bi], seeds[bi], true);
    per_task[bi] = nn::gradients(r.final_loss, params);
    losses[bi] = r.losses;
  });
  std::vector<ad::Tensor> grads = per_task[0];
  for (std::size_t b = 1; b < per_task.size(); ++b) {
    for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += per_task[b][k];
  }
  for (auto& g : grads) g /= static_cast<double>(n);
  if (result != nullptr) {
    result->step_losses.assign(losses[0].size(), 0.0);
    for (const auto& l : losses)
      for (std::size_t k = 0; k < l.size(); ++k) result->step_losses[k] += l[k] / n;
    result->loss = result->step_losses.back();
  }
  return grads;
}

MetaStepResult meta_step(MetaState& state, std::span<const FitTask* const> batch,
                         std::span<const std::uint64_t> seeds, int workers, double divergence) {
  MetaStepResult result;
  const auto grads = meta_gradient(state, batch, seeds, workers, &result);
  if (!std::isfinite(result.loss) || result.loss > divergence) {
    throw NumericalError("meta_step: loss " + std::to_string(result.loss) + " at outer iteration " +
                         std::to_string(state.iter) + " exceeds the divergence threshold");
  }
  auto params = state.outer_parameters();
  adam_step(params, grads, state.adam, state.outer_lr);
  if (state.inner.use_meta_sgd) state.inner_lrs.mutable_data() = clip_lrs(state.inner_lrs.data());
  ++state.iter;
  return result;
}

std::uint64_t task_seed(std::uint64_t seed, long iter, int index) {
  return mix_seed(mix_seed(seed, static_cast<std::uint64_t>(iter)), static_cast<std::uint64_t>(index));
}

std::vector<double> StepMetrics::mean_psnr() const {
  if (psnr.empty()) return {};
  std::vector<double> out(psnr[0].size(), 0.0);
  for (const auto& p : psnr)
    for (std::size_t k = 0; k < p.size(); ++k) out[k] += p[k] / static_cast<double>(psnr.size());
  return out;
}

StepMetrics evaluate_steps(const MetaState& state, std::span<const FitTask* const> tasks, std::uint64_t seed,
                           int workers) {
  StepMetrics m;
  m.psnr.resize(tasks.size());
  m.mse.resize(tasks.size());
  detail::parallel_for(static_cast<int>(tasks.size()), workers, [&](int i) {
    const auto ii = static_cast<std::size_t>(i);
    const InnerResult r =
        inner_loop_fit(state.model, state.inner_lrs, state.inner, *tasks[ii], mix_seed(seed, ii), false);
    for (const auto& phi : r.trajectory) {
      const double mse = tasks[ii]->full_mse(state.model, phi);
      m.mse[ii].push_back(mse);
      m.psnr[ii].push_back(inr::psnr(mse));
    }
  });
  return m;
}

MetaTrainResult meta_train(MetaState& state, std::span<const FitTask* const> train,
                           std::span<const FitTask* const> eval, const MetaTrainConfig& cfg) {
  require(!train.empty(), "meta_train: no training tasks");
  if (cfg.iters < 0 || cfg.batch_size < 1) throw ConfigError("meta_train: invalid iteration count or batch size");
  MetaTrainResult out;
  auto evaluate = [&] {
    if (eval.empty()) return;
    out.evals.emplace_back(state.iter, evaluate_steps(state, eval, mix_seed(cfg.seed, 7), cfg.workers).mean_psnr());
  };
  const int n = static_cast<int>(train.size());
  const int batch = std::min(cfg.batch_size, n);
  if (cfg.eval_every > 0) evaluate();
  for (long it = 0; it < cfg.iters; ++it) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(state.iter)));
    const auto idx = rng.choose(n, batch);
    std::vector<const FitTask*> tasks;
    std::vector<std::uint64_t> seeds;
    for (int i : idx) {
      tasks.push_back(train[static_cast<std::size_t>(i)]);
      seeds.push_back(task_seed(cfg.seed, state.iter, i));
    }
    const auto r = meta_step(state, tasks, seeds, cfg.workers);
    out.losses.push_back(r.loss);
    if (cfg.on_step) cfg.on_step(state.iter, r);
    if (cfg.eval_every > 0 && (state.iter % cfg.eval_every == 0 || it + 1 == cfg.iters)) evaluate();
  }
  return out;
}

Functaset create_functaset(const MetaState& state, std::span<const FitTask* const> tasks,
                           const std::vector<int>& labels, const std::string& split,
                           const NormStats* train_stats, std::uint64_t seed, int workers,
                           double norm_factor) {
  require(!tasks.empty(), "create_functaset: no datapoints");
  require(labels.empty() || labels.size() == tasks.size(), "create_functaset: one label per datapoint required");
  const int n = static_cast<int>(tasks.size());
  const int latent = state.model.latent_dim();
  std::vector<ad::Tensor> phis(tasks.size());
  std::vector<double> mses(tasks.size());
  std::vector<char> ok(tasks.size(), 0);
  detail::parallel_for(n, workers, [&](int i) {
    const auto ii = static_cast<std::size_t>(i);
    try {
      const InnerResult r =
          inner_loop_fit(state.model, state.inner_lrs, state.inner, *tasks[ii], mix_seed(seed, ii), false);
      const ad::Tensor phi = round_to_float32(r.phi.data());
      if (!phi.allFinite()) return;
      const double mse = tasks[ii]->full_mse(state.model, phi);
      if (!std::isfinite(mse)) return;
      phis[ii] = phi;
      mses[ii] = mse;
      ok[ii] = 1;
    } catch (const NumericalError&) {
    }
  });
  Functaset set;
  set.config = state.model.config();
  set.latent_dim = latent;
  set.base_digest = state.digest();
  set.split = split;
  int kept = 0;
  for (char k : ok) kept += k;
  if (kept == 0) throw NumericalError("create_functaset: every datapoint produced a non-finite fit");
  set.modulations.resize(kept, latent);
  int row = 0;
  for (int i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    if (!ok[ii]) {
      set.excluded.push_back(i);
      continue;
    }
    set.modulations.row(row++) = phis[ii];
    set.metrics.push_back(mses[ii]);
    set.source_index.push_back(i);
    if (!labels.empty()) set.labels.push_back(labels[ii]);
  }
  set.stats = train_stats != nullptr ? *train_stats : compute_stats(set.modulations, norm_factor);
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const MetaState& state) {
  io::Archive a(kCheckpointKind, kCheckpointVersion);
  const auto& c = state.model.config();
  a.set("siren.in_dim", c.in_dim);
  a.set("siren.out_dim", c.out_dim);
  a.set("siren.width", c.width);
  a.set("siren.depth", c.depth);
  a.set("siren.omega0", c.omega0);
  a.set("latent_dim", state.model.latent_dim());
  a.set("inner.n_inner", state.inner.n_inner);
  a.set("inner.fixed_lr", state.inner.fixed_lr);
  a.set("inner.use_meta_sgd", state.inner.use_meta_sgd ? "1" : "0");
  a.set("outer_lr", state.outer_lr);
  a.set("iter", state.iter);
  a.set("adam.t", state.adam.t);
  a.set("base_digest", state.digest());
  const auto params = state.model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    a.add_tensor("param." + std::to_string(i), params[i].data(), io::DType::kF64);
  }
  a.add_tensor("inner_lrs", state.inner_lrs.data(), io::DType::kF64);
  for (std::size_t i = 0; i < state.adam.m.size(); ++i) {
    a.add_tensor("adam.m." + std::to_string(i), state.adam.m[i], io::DType::kF64);
    a.add_tensor("adam.v." + std::to_string(i), state.adam.v[i], io::DType::kF64);
  }
  a.save(path);
}

MetaState load_checkpoint(const std::filesystem::path& path) {
  const io::Archive a = io::Archive::load(path, kCheckpointKind, kCheckpointVersion);
  inr::SirenConfig c;
  c.in_dim = static_cast<int>(a.get_long("siren.in_dim"));
  c.out_dim = static_cast<int>(a.get_long("siren.out_dim"));
  c.width = static_cast<int>(a.get_long("siren.width"));
  c.depth = static_cast<int>(a.get_long("siren.depth"));
  c.omega0 = a.get_double("siren.omega0");
  MetaState s;
  s.inner.n_inner = static_cast<int>(a.get_long("inner.n_inner"));
  s.inner.fixed_lr = a.get_double("inner.fixed_lr");
  s.inner.use_meta_sgd = a.get("inner.use_meta_sgd") == "1";
  s.outer_lr = a.get_double("outer_lr");
  s.iter = a.get_long("iter");
  s.adam.t = a.get_long("adam.t");
  inr::SirenParams p;
  for (int l = 0; l <= c.depth; ++l) {
    p.kernels.push_back(ad::Value::parameter(a.tensor("param." + std::to_string(2 * l))));
    p.biases.push_back(ad::Value::parameter(a.tensor("param." + std::to_string(2 * l + 1))));
  }
  const std::string base = std::to_string(2 * (c.depth + 1));
  const std::string next = std::to_string(2 * (c.depth + 1) + 1);
  inr::LatentMap map{ad::Value::parameter(a.tensor("param." + base)), ad::Value::parameter(a.tensor("param." + next))};
  try {
    s.model = inr::LatentModulatedSiren(c, std::move(p), std::move(map));
  } catch (const ContractViolation& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  s.inner_lrs = ad::Value::parameter(a.tensor("inner_lrs"));
  for (std::size_t i = 0; a.has_tensor("adam.m." + std::to_string(i)); ++i) {
    s.adam.m.push_back(a.tensor("adam.m." + std::to_string(i)));
    s.adam.v.push_back(a.tensor("adam.v." + std::to_string(i)));
  }
  if (a.get_long("latent_dim") != s.model.latent_dim() || a.get("base_digest") != s.digest()) {
    throw FormatError(path.string() + ": checkpoint header does not match its parameters");
  }
  return s;
}

}  // namespace functa::meta
