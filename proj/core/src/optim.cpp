#include "functa/optim.hpp"

#include <cmath>
#include <sstream>

#include "functa/error.hpp"

namespace functa {

void adam_step(std::span<ad::Value> params, std::span<const ad::Tensor> grads, AdamState& state,
               double lr) {
  require(params.size() == grads.size(), "adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(ad::Tensor::Zero(p.rows(), p.cols()));
      state.v.push_back(ad::Tensor::Zero(p.rows(), p.cols()));
    }
  }
  require(state.m.size() == params.size(), "adam_step: state was built for other parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(grads[i].rows() == params[i].rows() && grads[i].cols() == params[i].cols(),
            "adam_step: gradient shape mismatch");
    if (!grads[i].allFinite()) {
      std::ostringstream msg;
      msg << "adam_step: non-finite gradient for parameter " << i << " (" << grads[i].rows() << "x"
          << grads[i].cols() << ") at step " << state.t + 1;
      throw NumericalError(msg.str());
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i].cwiseAbs2();
    auto& p = params[i].mutable_data();
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.eps);
  }
}

double schedule_lr(long iter, const LrSchedule& s) {
  require(iter >= 0, "schedule_lr: iteration must be non-negative");
  if (s.warmup_iters <= 0) return s.base_lr;
  if (iter < s.warmup_iters) {
    return s.base_lr * static_cast<double>(iter) / static_cast<double>(s.warmup_iters);
  }
  return s.base_lr * std::sqrt(static_cast<double>(s.warmup_iters) / static_cast<double>(iter));
}

}  // namespace functa
