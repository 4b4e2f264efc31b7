#pragma once

// Neural spline flow over normalised modulation vectors.
//
// Each layer is a rational-quadratic coupling transform followed by a PLU
// linear map. The density is evaluated in the data -> noise direction;
// sampling runs the analytic inverses in reverse order.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "functa/ad.hpp"
#include "functa/nn.hpp"
#include "functa/optim.hpp"
#include "functa/rng.hpp"
#include "functa/spline.hpp"

namespace functa::flow {

struct FlowConfig {
  /// Dimension of the modelled vectors; must be even.
  int dim = 2;
  int num_layers = 4;
  int hidden = 128;
  double dropout = 0.0;
  /// 0 for an unconditional flow.
  int num_classes = 0;
  int label_dim = 32;
  double base_std = 0.25;
  spline::SplineConfig spline;

  void validate() const;
  bool conditional() const { return num_classes > 0; }
};

/// y = P L U x with unit-lower L and positive diagonal in U.
struct PluLinear {
  static constexpr double kMinDiag = 1e-6;

  /// (P x)_i = x_perm[i].
  std::vector<int> perm;
  ad::Value lower;     // d x d, strictly lower part used
  ad::Value upper;     // d x d, strictly upper part used
  ad::Value diag_raw;  // 1 x d, diag(U) = softplus(raw) + kMinDiag

  static PluLinear create(int dim, Rng& rng);
  int dim() const { return static_cast<int>(perm.size()); }
  ad::Tensor diag() const;
  void set_diag(const ad::Tensor& values);
  /// Dense P L U.
  ad::Tensor matrix() const;
  double log_det() const;
  /// Rows of x mapped by W; log-determinant (1 x 1) written to *log_det.
  ad::Value forward(const ad::Value& x, ad::Value* log_det) const;
  ad::Tensor inverse(const ad::Tensor& y) const;
  void collect(std::vector<ad::Value>& params) const;
};

/// Maps the conditioning half (and optional label embedding) to spline
/// parameters for the other half.
struct Conditioner {
  nn::Linear hidden1, hidden2, out;
  ad::Value operator()(const ad::Value& in, double dropout, Rng* rng) const;
  void collect(std::vector<ad::Value>& params) const;
};

struct CouplingLayer {
  /// Column offset of the half that passes through unchanged.
  int pass_offset = 0;
  Conditioner net;
};

class FlowModel {
 public:
  FlowModel() = default;
  static FlowModel create(const FlowConfig& config, std::uint64_t seed);

  const FlowConfig& config() const { return config_; }
  std::vector<CouplingLayer>& couplings() { return couplings_; }
  std::vector<PluLinear>& plus() { return plus_; }
  const std::vector<PluLinear>& plus() const { return plus_; }
  std::vector<ad::Value> parameters() const;

  /// Data -> noise. `log_det` receives the per-row log|det J| (n x 1).
  ad::Value to_noise(const ad::Value& x, std::span<const int> labels, ad::Value* log_det,
                     Rng* dropout_rng = nullptr) const;
  /// Noise -> data.
  ad::Tensor from_noise(const ad::Tensor& z, std::span<const int> labels) const;

  /// Per-row log density (n x 1). Pass an Rng to enable dropout (training).
  ad::Value log_prob(const ad::Value& x, std::span<const int> labels = {}, Rng* dropout_rng = nullptr) const;
  ad::Tensor log_prob(const ad::Tensor& x, std::span<const int> labels = {}) const;

  /// z ~ N(0, (temperature * base_std)^2 I) pushed through the flow.
  /// Temperature 0 returns copies of the image of 0.
  ad::Tensor sample(int n, double temperature, Rng& rng, std::span<const int> labels = {}) const;

 private:
  ad::Value conditioner_input(const ad::Value& pass, std::span<const int> labels) const;
  void check_input(ad::Index rows, ad::Index cols, std::span<const int> labels) const;

  FlowConfig config_;
  std::vector<CouplingLayer> couplings_;
  std::vector<PluLinear> plus_;
  ad::Value embedding_;  // num_classes x label_dim
};

/// Log density of an isotropic Gaussian, per row.
ad::Value gaussian_log_prob(const ad::Value& z, double stddev);

struct FlowTrainConfig {
  long iters = 1000;
  int batch_size = 128;
  LrSchedule schedule{3e-4, 4000};
  std::uint64_t seed = 0;
  /// Record the test NLL every this many iterations (0 disables).
  long eval_every = 0;
};

struct FlowTrainResult {
  /// Mean training-batch NLL per iteration.
  std::vector<double> nll;
  std::vector<std::pair<long, double>> test_nll;
};

/// Maximises the mean log density of `data` rows with Adam. Throws
/// NumericalError on a non-finite loss.
FlowTrainResult train_flow(FlowModel& model, const ad::Tensor& data, const std::vector<int>& labels,
                           const FlowTrainConfig& cfg, const ad::Tensor* test_data = nullptr,
                           const std::vector<int>* test_labels = nullptr);

/// Mean negative log density over rows.
double mean_nll(const FlowModel& model, const ad::Tensor& data, std::span<const int> labels = {});

void save_flow(const std::filesystem::path& path, const FlowModel& model);
FlowModel load_flow(const std::filesystem::path& path);

}  // namespace functa::flow
