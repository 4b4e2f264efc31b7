#pragma once

// Monotone rational-quadratic splines on [-B, B] with identity tails.
//
// Each dimension takes 3K + 1 raw parameters laid out as K bin widths,
// K bin heights and K + 1 knot derivatives.

#include "functa/ad.hpp"

namespace functa::spline {

struct SplineConfig {
  int num_bins = 8;
  double bound = 3.0;
  /// Each bin keeps at least this fraction of the interval.
  double min_bin_fraction = 1e-3;
  double min_derivative = 1e-3;

  void validate() const;
  int params_per_dim() const { return 3 * num_bins + 1; }
};

/// Normalised knots of one spline: K + 1 positions, values and derivatives.
struct Knots {
  std::vector<double> x, y, d;
};

/// Softmax widths/heights scaled to 2B and softplus derivatives. Raw zeros
/// give the identity.
Knots make_knots(const double* raw, const SplineConfig& cfg);

/// Throws ContractViolation unless positions are increasing from -B to B and
/// derivatives are positive.
void check_knots(const Knots& k, double bound);

struct ScalarResult {
  double y = 0.0;
  /// log |dy/dx|.
  double log_det = 0.0;
};

ScalarResult rq_forward(double x, const Knots& k);
ScalarResult rq_inverse(double y, const Knots& k);

/// Elementwise spline over an (n x d) batch with raw parameters of shape
/// (n x d*(3K+1)). Returns y and writes the per-row sum of log-determinants
/// (n x 1) to *log_det. Differentiable (first order) in x and raw.
ad::Value rq_spline(const ad::Value& x, const ad::Value& raw, const SplineConfig& cfg, bool inverse,
                    ad::Value* log_det);

}  // namespace functa::spline
