#include "functa/nn.hpp"

#include <cmath>

#include "functa/error.hpp"

namespace functa::nn {

Linear Linear::create(int in, int out, Init init, Rng& rng) {
  require(in >= 1 && out >= 1, "Linear: dimensions must be positive");
  ad::Tensor k = ad::Tensor::Zero(in, out);
  if (init == Init::kFanIn) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
    for (ad::Index i = 0; i < k.size(); ++i) k.data()[i] = rng.truncated_normal(stddev);
  }
  return Linear{ad::Value::parameter(std::move(k)), ad::Value::parameter(ad::Tensor::Zero(1, out))};
}

ad::Value dropout(const ad::Value& x, double p, Rng* rng) {
  require(p >= 0.0 && p < 1.0, "dropout: rate must lie in [0, 1)");
  if (rng == nullptr || p == 0.0) return x;
  ad::Tensor mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (ad::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->bernoulli(p) ? 0.0 : keep;
  return ad::mul_const(x, mask);
}

long mlp_param_count(int in, int width, int hidden_layers, int out) {
  require(hidden_layers >= 0, "mlp_param_count: negative depth");
  if (hidden_layers == 0) return static_cast<long>(in) * out + out;
  long n = static_cast<long>(in) * width + width;
  n += static_cast<long>(hidden_layers - 1) * (static_cast<long>(width) * width + width);
  n += static_cast<long>(width) * out + out;
  return n;
}

long count_scalars(const std::vector<ad::Value>& params) {
  long n = 0;
  for (const auto& p : params) n += static_cast<long>(p.size());
  return n;
}

std::vector<ad::Tensor> snapshot(const std::vector<ad::Value>& params) {
  std::vector<ad::Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.data());
  return out;
}

std::vector<ad::Tensor> gradients(const ad::Value& loss, const std::vector<ad::Value>& params) {
  const auto g = ad::grad(loss, params);
  std::vector<ad::Tensor> out;
  out.reserve(g.size());
  for (const auto& v : g) out.push_back(v.data());
  return out;
}

}  // namespace functa::nn
