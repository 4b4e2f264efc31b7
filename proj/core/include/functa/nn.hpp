#pragma once

// Small building blocks shared by the downstream models.

#include <vector>

#include "functa/ad.hpp"
#include "functa/rng.hpp"

namespace functa::nn {

enum class Init {
  kZero,
  /// Truncated normal (2 sigma) with stddev 1/sqrt(fan_in).
  kFanIn,
};

/// y = x * kernel + bias, kernel stored as (in x out).
struct Linear {
  ad::Value kernel;
  ad::Value bias;

  static Linear create(int in, int out, Init init, Rng& rng);
  ad::Value operator()(const ad::Value& x) const { return ad::add_row(ad::matmul(x, kernel), bias); }
  int in() const { return static_cast<int>(kernel.rows()); }
  int out() const { return static_cast<int>(kernel.cols()); }
  void collect(std::vector<ad::Value>& params) const {
    params.push_back(kernel);
    params.push_back(bias);
  }
};

/// Inverted dropout. `rng == nullptr` or p == 0 is the identity.
ad::Value dropout(const ad::Value& x, double p, Rng* rng);

/// Number of trainable parameters in an MLP with `hidden_layers` layers of
/// width `width` between `in` and `out`.
long mlp_param_count(int in, int width, int hidden_layers, int out);

/// Total number of scalars in a parameter list.
long count_scalars(const std::vector<ad::Value>& params);

/// Copies of the current parameter data.
std::vector<ad::Tensor> snapshot(const std::vector<ad::Value>& params);

/// Gradients of `loss` w.r.t. `params` as plain tensors.
std::vector<ad::Tensor> gradients(const ad::Value& loss, const std::vector<ad::Value>& params);

}  // namespace functa::nn
