#pragma once

// Denoising diffusion over normalised modulation vectors: fixed linear
// schedule, epsilon-prediction loss and ancestral sampling with a residual
// MLP noise predictor.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "functa/ad.hpp"
#include "functa/nn.hpp"
#include "functa/optim.hpp"
#include "functa/rng.hpp"

namespace functa::diffusion {

/// Timesteps are 1-based: beta(1) .. beta(T).
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);
  int steps() const { return static_cast<int>(betas.size()); }
  double beta(int t) const { return betas.at(index(t)); }
  double alpha(int t) const { return alphas.at(index(t)); }
  double alpha_bar(int t) const { return alpha_bars.at(index(t)); }

 private:
  std::size_t index(int t) const;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, with one t per row.
ad::Tensor q_sample(const NoiseSchedule& s, const ad::Tensor& x0, const std::vector<int>& t, const ad::Tensor& eps);
ad::Tensor q_sample(const NoiseSchedule& s, const ad::Tensor& x0, int t, const ad::Tensor& eps);
/// One forward transition x_{t-1} -> x_t.
ad::Tensor q_step(const NoiseSchedule& s, const ad::Tensor& x_prev, int t, const ad::Tensor& eps);

/// 128-dimensional sinusoidal embedding of each timestep (n x dim).
ad::Tensor timestep_embedding(const std::vector<int>& t, int dim = 128);

struct EpsNetConfig {
  int dim = 2;
  int width = 256;
  int blocks = 4;
  double dropout = 0.0;
  int time_dim = 128;

  void validate() const;
};

struct ResidualBlock {
  nn::Linear in, time, out;
};

/// h = Lin(x); per block h += Lin(dropout(silu(Lin(silu(h)) + Lin(temb))));
/// output Lin0(silu(h)) with a zero-initialised final layer.
class EpsNet {
 public:
  EpsNet() = default;
  static EpsNet create(const EpsNetConfig& config, std::uint64_t seed);

  const EpsNetConfig& config() const { return config_; }
  ad::Value operator()(const ad::Value& x, const std::vector<int>& t, Rng* dropout_rng = nullptr) const;
  std::vector<ad::Value> parameters() const;

 private:
  EpsNetConfig config_;
  nn::Linear input_, time1_, time2_, final_;
  std::vector<ResidualBlock> blocks_;
};

struct DdpmModel {
  NoiseSchedule schedule;
  EpsNet net;

  static DdpmModel create(const EpsNetConfig& config, std::uint64_t seed, int steps = 1000);
  int dim() const { return net.config().dim; }
};

/// Mean over elements of (eps - eps_theta(x_t, t))^2 for given t and eps.
ad::Value ddpm_loss(const DdpmModel& model, const ad::Tensor& x0, const std::vector<int>& t, const ad::Tensor& eps,
                    Rng* dropout_rng = nullptr);
/// Draws t ~ U{1..T} per row and eps ~ N(0, I) from `rng`.
ad::Value ddpm_loss(const DdpmModel& model, const ad::Tensor& x0, Rng& rng, Rng* dropout_rng = nullptr);

/// Predicted noise for a batch at a single timestep.
using EpsFn = std::function<ad::Tensor(const ad::Tensor& x_t, int t)>;

/// x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) eps) / sqrt(alpha_t) + sqrt(beta_t) noise,
/// without noise at t = 1.
ad::Tensor p_sample_step(const NoiseSchedule& s, const ad::Tensor& x_t, int t, const ad::Tensor& eps_pred,
                         const ad::Tensor& noise);
ad::Tensor p_sample_step(const DdpmModel& model, const ad::Tensor& x_t, int t, const ad::Tensor& noise);

/// Runs the reverse chain from x_T ~ N(0, I).
ad::Tensor sample(const NoiseSchedule& s, const EpsFn& eps, int n, int dim, Rng& rng);
ad::Tensor sample(const DdpmModel& model, int n, Rng& rng);

/// Per-dimension variance of samples from a model whose predictor is zero.
double untrained_sample_variance(const NoiseSchedule& s);

struct DdpmTrainConfig {
  long iters = 1000;
  int batch_size = 128;
  LrSchedule schedule{3e-4, 4000};
  std::uint64_t seed = 0;
};

/// Adam on ddpm_loss; returns the per-iteration loss. Throws NumericalError
/// on a non-finite loss.
std::vector<double> train_ddpm(DdpmModel& model, const ad::Tensor& data, const DdpmTrainConfig& cfg);

void save_ddpm(const std::filesystem::path& path, const DdpmModel& model);
DdpmModel load_ddpm(const std::filesystem::path& path);

}  // namespace functa::diffusion
