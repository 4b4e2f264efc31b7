#pragma once

// Meta-learning of a shared base network with inner-loop fitting of the
// latent modulation only, optionally with learned per-dimension inner
// learning rates.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "functa/ad.hpp"
#include "functa/functaset.hpp"
#include "functa/inr.hpp"
#include "functa/optim.hpp"
#include "functa/render.hpp"

namespace functa::meta {

struct InnerLoopConfig {
  int n_inner = 3;
  /// Step size used when meta-SGD is off.
  double fixed_lr = 1e-2;
  bool use_meta_sgd = true;

  void validate() const;
};

/// One datapoint as seen by the inner loop.
class FitTask {
 public:
  virtual ~FitTask() = default;
  /// Differentiable reconstruction loss at phi. `seed` fixes any subsampling.
  virtual ad::Value loss(const inr::LatentModulatedSiren& model, const ad::Value& phi,
                         std::uint64_t seed) const = 0;
  /// Mean squared error of the reconstruction at phi on the full signal.
  virtual double full_mse(const inr::LatentModulatedSiren& model, const ad::Tensor& phi) const = 0;
};

/// Signal sampled on a fixed coordinate set (images, voxels, sphere grids).
class PointTask : public FitTask {
 public:
  /// With sample_points > 0 each loss uses that many coordinates drawn
  /// without replacement from the seed.
  PointTask(std::shared_ptr<const ad::Tensor> coords, ad::Tensor targets, int sample_points = 0);

  ad::Value loss(const inr::LatentModulatedSiren& model, const ad::Value& phi,
                 std::uint64_t seed) const override;
  double full_mse(const inr::LatentModulatedSiren& model, const ad::Tensor& phi) const override;

  const ad::Tensor& coords() const { return *coords_; }
  const ad::Tensor& targets() const { return targets_; }

 private:
  std::shared_ptr<const ad::Tensor> coords_;
  ad::Tensor targets_;
  int sample_points_;
};

/// Posed views of a scene fitted through the volumetric renderer.
class SceneTask : public FitTask {
 public:
  SceneTask(std::vector<render::View> views, render::RenderConfig config, render::Subsample subsample);

  ad::Value loss(const inr::LatentModulatedSiren& model, const ad::Value& phi,
                 std::uint64_t seed) const override;
  double full_mse(const inr::LatentModulatedSiren& model, const ad::Tensor& phi) const override;

  const std::vector<render::View>& views() const { return views_; }
  const render::RenderConfig& config() const { return config_; }

 private:
  std::vector<render::View> views_;
  render::RenderConfig config_;
  render::Subsample subsample_;
};

struct InnerResult {
  /// phi after n_inner steps (a graph node when built with create_graph).
  ad::Value phi;
  /// Loss before each step and after the last one (n_inner + 1 entries).
  std::vector<double> losses;
  /// phi_0 .. phi_n.
  std::vector<ad::Tensor> trajectory;
  /// Loss at the final phi, kept in the graph.
  ad::Value final_loss;
};

/// Runs the inner loop from phi = 0 with the base network frozen:
/// phi <- phi - lr * dL/dphi, elementwise lr under meta-SGD.
/// With create_graph the result is differentiable w.r.t. the base network
/// and the learning rates. Throws NumericalError on a non-finite loss.
InnerResult inner_loop_fit(const inr::LatentModulatedSiren& model, const ad::Value& inner_lrs,
                           const InnerLoopConfig& cfg, const FitTask& task, std::uint64_t seed,
                           bool create_graph = false);

/// Per-dimension learning rates drawn from U[0.005, 0.1].
ad::Tensor init_meta_sgd(int latent_dim, std::uint64_t seed);

/// Bounds that keep the learned learning rates inside (0, 1).
inline constexpr double kMinInnerLr = 1e-6;
inline constexpr double kMaxInnerLr = 1.0 - 1e-6;

struct MetaState {
  inr::LatentModulatedSiren model;
  ad::Value inner_lrs;  // 1 x latent_dim
  AdamState adam;
  InnerLoopConfig inner;
  double outer_lr = 3e-6;
  long iter = 0;

  static MetaState create(const inr::SirenConfig& config, int latent_dim, const InnerLoopConfig& inner,
                          double outer_lr, std::uint64_t seed);
  /// Parameters updated by the outer loop: base network, latent map and,
  /// under meta-SGD, the learning rates.
  std::vector<ad::Value> outer_parameters() const;
  std::string digest() const { return model.digest(); }
};

struct MetaStepResult {
  /// Mean post-inner-loop loss over the batch.
  double loss = 0.0;
  /// Mean loss at each inner step.
  std::vector<double> step_losses;
};

/// Mean post-inner-loop loss over a batch (no gradients).
double meta_objective(const MetaState& state, std::span<const FitTask* const> batch,
                      std::span<const std::uint64_t> seeds);

/// Outer gradients of the mean post-inner-loop loss w.r.t.
/// outer_parameters(), differentiated through the unrolled inner loop.
/// Tasks are processed on `workers` threads and reduced in batch order.
std::vector<ad::Tensor> meta_gradient(const MetaState& state, std::span<const FitTask* const> batch,
                                      std::span<const std::uint64_t> seeds, int workers,
                                      MetaStepResult* result = nullptr);

/// One Adam update of the outer parameters followed by learning-rate
/// clipping. Throws NumericalError when the loss exceeds `divergence`.
MetaStepResult meta_step(MetaState& state, std::span<const FitTask* const> batch,
                         std::span<const std::uint64_t> seeds, int workers = 1, double divergence = 1e6);

struct MetaTrainConfig {
  long iters = 1000;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int workers = 1;
  /// Evaluate the test tasks every this many iterations (0 disables).
  long eval_every = 0;
  std::function<void(long iter, const MetaStepResult&)> on_step;
};

struct MetaTrainResult {
  std::vector<double> losses;
  /// (iteration, mean PSNR after each inner step) on the evaluation tasks.
  std::vector<std::pair<long, std::vector<double>>> evals;
};

/// Seed of datapoint `index` at outer iteration `iter`.
std::uint64_t task_seed(std::uint64_t seed, long iter, int index);

MetaTrainResult meta_train(MetaState& state, std::span<const FitTask* const> train,
                           std::span<const FitTask* const> eval, const MetaTrainConfig& cfg);

struct StepMetrics {
  /// Per task, PSNR of the full signal at each of phi_0 .. phi_n.
  std::vector<std::vector<double>> psnr;
  /// Per task, full-signal MSE at each phi.
  std::vector<std::vector<double>> mse;
  std::vector<double> mean_psnr() const;
};

/// Runs the inner loop on each task and records the full-signal error at
/// every step.
StepMetrics evaluate_steps(const MetaState& state, std::span<const FitTask* const> tasks,
                           std::uint64_t seed, int workers = 1);

/// Fits one modulation per task with the frozen base network. Tasks whose
/// fit is not finite are excluded and listed in Functaset::excluded.
/// `train_stats` supplies the normalisation for test splits; when null the
/// statistics are computed from this split.
Functaset create_functaset(const MetaState& state, std::span<const FitTask* const> tasks,
                           const std::vector<int>& labels, const std::string& split,
                           const NormStats* train_stats, std::uint64_t seed, int workers = 1,
                           double norm_factor = 4.0);

void save_checkpoint(const std::filesystem::path& path, const MetaState& state);
MetaState load_checkpoint(const std::filesystem::path& path);

}  // namespace functa::meta
