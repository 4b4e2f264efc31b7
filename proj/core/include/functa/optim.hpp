#pragma once

#include <span>
#include <vector>

#include "functa/ad.hpp"

namespace functa {

/// Adam moments for a fixed list of parameters.
struct AdamState {
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update applied in place to `params`.
/// Throws NumericalError naming the offending parameter if a gradient is not
/// finite. The state is lazily sized on the first call.
void adam_step(std::span<ad::Value> params, std::span<const ad::Tensor> grads, AdamState& state,
               double lr);

/// Linear warmup from 0 to base_lr, then base_lr * sqrt(warmup_iters / iter).
/// warmup_iters == 0 gives a constant schedule.
struct LrSchedule {
  double base_lr = 3e-4;
  long warmup_iters = 4000;
};

double schedule_lr(long iter, const LrSchedule& s);

}  // namespace functa
