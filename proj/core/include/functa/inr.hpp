#pragma once

// SIREN-family networks: plain, shift-modulated and latent-modulated.
//
// Every hidden layer computes sin(omega0 * (x W + b + s)); the final layer is
// linear with 0.5 added to its output. Kernels are stored as (n_in x n_out).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "functa/ad.hpp"

namespace functa::inr {

struct SirenConfig {
  int in_dim = 2;
  int out_dim = 1;
  int width = 64;
  /// Number of sine layers.
  int depth = 4;
  double omega0 = 30.0;

  void validate() const;
  int shift_dim() const { return width * depth; }
  bool operator==(const SirenConfig&) const = default;
};

struct SirenParams {
  /// depth sine-layer kernels followed by the final linear kernel.
  std::vector<ad::Value> kernels;
  std::vector<ad::Value> biases;

  std::vector<ad::Value> list() const;
  SirenParams clone() const;
};

SirenParams init_siren(const SirenConfig& config, std::uint64_t seed);

/// Trainable parameters of a SIREN (modulations excluded).
long param_count(const SirenConfig& config);

/// Fully connected classifier layout: in -> hidden_layers x width -> out.
struct MlpSpec {
  int in = 0;
  int width = 0;
  int hidden_layers = 0;
  int out = 0;
};
long param_count(const MlpSpec& spec);

/// Forward pass of a shift-modulated SIREN. `shifts` is 1 x (width*depth),
/// or undefined for an unmodulated network. Returns N x out_dim.
ad::Value shift_forward(const SirenConfig& config, const SirenParams& params, const ad::Value& shifts,
                        const ad::Value& coords);

class Siren {
 public:
  Siren(SirenConfig config, std::uint64_t seed);
  Siren(SirenConfig config, SirenParams params);

  const SirenConfig& config() const { return config_; }
  const SirenParams& params() const { return params_; }
  SirenParams& params() { return params_; }
  std::vector<ad::Value> parameters() const { return params_.list(); }

  ad::Value forward(const ad::Value& coords) const;
  ad::Tensor evaluate(const ad::Tensor& coords) const;

 private:
  SirenConfig config_;
  SirenParams params_;
};

/// s = phi W' + b', mapping a latent to every shift of the network.
struct LatentMap {
  ad::Value kernel;  // latent_dim x shift_dim
  ad::Value bias;    // 1 x shift_dim
};

class LatentModulatedSiren {
 public:
  LatentModulatedSiren() = default;
  /// SIREN init for the base network; W' truncated normal with stddev
  /// 1/sqrt(latent_dim), b' zero.
  static LatentModulatedSiren create(const SirenConfig& config, int latent_dim, std::uint64_t seed);
  LatentModulatedSiren(SirenConfig config, SirenParams params, LatentMap map);

  const SirenConfig& config() const { return config_; }
  const SirenParams& params() const { return params_; }
  const LatentMap& latent_map() const { return map_; }
  int latent_dim() const { return static_cast<int>(map_.kernel.rows()); }
  int shift_dim() const { return config_.shift_dim(); }

  ad::Value shifts(const ad::Value& phi) const;
  /// phi is 1 x latent_dim, coords N x in_dim.
  ad::Value forward(const ad::Value& phi, const ad::Value& coords) const;
  /// Graph-free evaluation, chunked over coordinates.
  ad::Tensor evaluate(const ad::Tensor& phi, const ad::Tensor& coords) const;

  /// Base network parameters followed by W' and b'.
  std::vector<ad::Value> parameters() const;
  /// Deep copy with fresh leaves.
  LatentModulatedSiren clone() const;
  /// sha256 over all parameters (float64).
  std::string digest() const;

 private:
  SirenConfig config_;
  SirenParams params_;
  LatentMap map_;
};

/// Mean over points and channels of the squared error.
ad::Value recon_loss(const ad::Value& predictions, const ad::Tensor& targets);
ad::Value recon_loss(const LatentModulatedSiren& model, const ad::Value& phi, const ad::Tensor& coords,
                     const ad::Tensor& targets);
/// Sum over points of the squared L2 error.
double sum_squared_error(const ad::Tensor& predictions, const ad::Tensor& targets);
double mean_squared_error(const ad::Tensor& predictions, const ad::Tensor& targets);

/// -10 log10(mse). Returns +inf for mse == 0 and NaN for mse < 0.
double psnr(double mse);
/// PSNR of the dataset-average MSE.
double dataset_psnr(const std::vector<double>& mses);
/// Fraction of predictions that round to their binary target.
double voxel_accuracy(const ad::Tensor& predictions, const ad::Tensor& targets);

struct PerturbationResult {
  /// Per-coordinate sum over channels of |perturbed - reference|.
  ad::Tensor l1_map;
  /// RMSE of the perturbed reconstruction against the unperturbed one.
  double rmse = 0.0;
  /// RMSE of the perturbed reconstruction against the targets.
  double rmse_to_targets = 0.0;
  int layer = 0;
  int unit = 0;
};

/// Adds delta to one entry of the expanded shift vector s = W' phi + b'.
PerturbationResult perturb_modulation_rmse(const LatentModulatedSiren& model, const ad::Tensor& phi,
                                           int shift_index, double delta, const ad::Tensor& coords,
                                           const ad::Tensor& targets);

// ---------------------------------------------------------------------------
// Single-signal fitting

struct SignalFitConfig {
  int max_steps = 20000;
  double lr = 1e-3;
  /// Coordinates per step; 0 means the full signal.
  int batch = 0;
  int eval_every = 500;
  std::uint64_t seed = 0;
  /// Targets are binary occupancies; accuracy is tracked.
  bool binary = false;
  /// Stop once the full-signal voxel accuracy reaches this value.
  std::optional<double> stop_at_accuracy;
  /// Stop once the full-signal PSNR reaches this value.
  std::optional<double> stop_at_psnr;
};

struct SignalFitResult {
  int steps = 0;
  double mse = 0.0;
  double psnr = 0.0;
  double voxel_accuracy = 0.0;
  std::vector<std::pair<int, double>> curve;  // (step, metric)
};

/// Fits all parameters of `siren` to one signal with Adam.
SignalFitResult fit_siren(Siren& siren, const ad::Tensor& coords, const ad::Tensor& targets,
                          const SignalFitConfig& cfg);

}  // namespace functa::inr
