#include "functa/inr.hpp"

#include <cmath>
#include <limits>

#include "functa/archive.hpp"
#include "functa/error.hpp"
#include "functa/nn.hpp"
#include "functa/optim.hpp"
#include "functa/rng.hpp"

namespace functa::inr {

namespace {

constexpr ad::Index kEvalChunk = 16384;

}  // namespace

void SirenConfig::validate() const {
  if (in_dim < 1 || out_dim < 1) throw ConfigError("SirenConfig: in_dim and out_dim must be >= 1");
  if (width < 1) throw ConfigError("SirenConfig: width must be >= 1");
  if (depth < 1) throw ConfigError("SirenConfig: depth must be >= 1");
  if (!(omega0 > 0.0)) throw ConfigError("SirenConfig: omega0 must be > 0");
}

std::vector<ad::Value> SirenParams::list() const {
  std::vector<ad::Value> out;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    out.push_back(kernels[i]);
    out.push_back(biases[i]);
  }
  return out;
}

SirenParams SirenParams::clone() const {
  SirenParams p;
  for (const auto& k : kernels) p.kernels.push_back(ad::Value::parameter(k.data()));
  for (const auto& b : biases) p.biases.push_back(ad::Value::parameter(b.data()));
  return p;
}

SirenParams init_siren(const SirenConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  SirenParams p;
  int n_in = config.in_dim;
  for (int layer = 0; layer <= config.depth; ++layer) {
    const bool final_layer = layer == config.depth;
    const int n_out = final_layer ? config.out_dim : config.width;
    const double bound = layer == 0 ? 1.0 / n_in
                                    : std::sqrt(6.0 / n_in) / config.omega0;
    ad::Tensor k(n_in, n_out);
    for (ad::Index i = 0; i < k.size(); ++i) k.data()[i] = rng.uniform(-bound, bound);
    p.kernels.push_back(ad::Value::parameter(std::move(k)));
    p.biases.push_back(ad::Value::parameter(ad::Tensor::Zero(1, n_out)));
    n_in = n_out;
  }
  return p;
}

long param_count(const SirenConfig& config) {
  config.validate();
  return nn::mlp_param_count(config.in_dim, config.width, config.depth, config.out_dim);
}

long param_count(const MlpSpec& spec) {
  require(spec.in >= 1 && spec.out >= 1 && spec.hidden_layers >= 0, "param_count: invalid MLP");
  require(spec.hidden_layers == 0 || spec.width >= 1, "param_count: invalid MLP width");
  return nn::mlp_param_count(spec.in, spec.width, spec.hidden_layers, spec.out);
}

ad::Value shift_forward(const SirenConfig& config, const SirenParams& params, const ad::Value& shifts,
                        const ad::Value& coords) {
  if (coords.cols() != config.in_dim) {
    throw ContractViolation("siren forward: coordinates have " + std::to_string(coords.cols()) +
                            " columns, expected " + std::to_string(config.in_dim));
  }
  if (shifts.defined() && (shifts.rows() != 1 || shifts.cols() != config.shift_dim())) {
    throw ContractViolation("siren forward: shift vector must be 1 x " +
                            std::to_string(config.shift_dim()));
  }
  ad::Value h = coords;
  for (int layer = 0; layer < config.depth; ++layer) {
    const auto li = static_cast<std::size_t>(layer);
    ad::Value offset = params.biases[li];
    if (shifts.defined()) {
      offset = ad::add(offset, ad::slice_cols(shifts, layer * config.width, config.width));
    }
    h = ad::sin(ad::scale(ad::add_row(ad::matmul(h, params.kernels[li]), offset), config.omega0));
  }
  const auto last = static_cast<std::size_t>(config.depth);
  return ad::add_scalar(ad::add_row(ad::matmul(h, params.kernels[last]), params.biases[last]), 0.5);
}

// ---------------------------------------------------------------------------

Siren::Siren(SirenConfig config, std::uint64_t seed)
    : config_(config), params_(init_siren(config, seed)) {}

Siren::Siren(SirenConfig config, SirenParams params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
}

ad::Value Siren::forward(const ad::Value& coords) const {
  return shift_forward(config_, params_, ad::Value(), coords);
}

ad::Tensor Siren::evaluate(const ad::Tensor& coords) const {
  ad::NoGradGuard no_grad;
  ad::Tensor out(coords.rows(), config_.out_dim);
  for (ad::Index start = 0; start < coords.rows(); start += kEvalChunk) {
    const ad::Index n = std::min(kEvalChunk, coords.rows() - start);
    out.middleRows(start, n) = forward(ad::Value::constant(coords.middleRows(start, n))).data();
  }
  return out;
}

// ---------------------------------------------------------------------------

LatentModulatedSiren LatentModulatedSiren::create(const SirenConfig& config, int latent_dim,
                                                  std::uint64_t seed) {
  config.validate();
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  SirenParams params = init_siren(config, seed);
  Rng rng(mix_seed(seed, 1));
  ad::Tensor k(latent_dim, config.shift_dim());
  const double stddev = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  for (ad::Index i = 0; i < k.size(); ++i) k.data()[i] = rng.truncated_normal(stddev);
  LatentMap map{ad::Value::parameter(std::move(k)),
                ad::Value::parameter(ad::Tensor::Zero(1, config.shift_dim()))};
  return LatentModulatedSiren(config, std::move(params), std::move(map));
}

LatentModulatedSiren::LatentModulatedSiren(SirenConfig config, SirenParams params, LatentMap map)
    : config_(config), params_(std::move(params)), map_(std::move(map)) {
  config_.validate();
  require(map_.kernel.cols() == config_.shift_dim() && map_.bias.cols() == config_.shift_dim() &&
              map_.bias.rows() == 1,
          "LatentModulatedSiren: latent map output must equal width*depth");
}

ad::Value LatentModulatedSiren::shifts(const ad::Value& phi) const {
  if (phi.rows() != 1 || phi.cols() != latent_dim()) {
    throw ContractViolation("latent modulation must be 1 x " + std::to_string(latent_dim()));
  }
  return ad::add(ad::matmul(phi, map_.kernel), map_.bias);
}

ad::Value LatentModulatedSiren::forward(const ad::Value& phi, const ad::Value& coords) const {
  return shift_forward(config_, params_, shifts(phi), coords);
}

ad::Tensor LatentModulatedSiren::evaluate(const ad::Tensor& phi, const ad::Tensor& coords) const {
  ad::NoGradGuard no_grad;
  const ad::Value s = shifts(ad::Value::constant(phi));
  ad::Tensor out(coords.rows(), config_.out_dim);
  for (ad::Index start = 0; start < coords.rows(); start += kEvalChunk) {
    const ad::Index n = std::min(kEvalChunk, coords.rows() - start);
    out.middleRows(start, n) =
        shift_forward(config_, params_, s, ad::Value::constant(coords.middleRows(start, n))).data();
  }
  return out;
}

std::vector<ad::Value> LatentModulatedSiren::parameters() const {
  auto out = params_.list();
  out.push_back(map_.kernel);
  out.push_back(map_.bias);
  return out;
}

LatentModulatedSiren LatentModulatedSiren::clone() const {
  return LatentModulatedSiren(config_, params_.clone(),
                              LatentMap{ad::Value::parameter(map_.kernel.data()),
                                        ad::Value::parameter(map_.bias.data())});
}

std::string LatentModulatedSiren::digest() const { return io::tensors_sha256(nn::snapshot(parameters())); }

// ---------------------------------------------------------------------------
// Losses and metrics

ad::Value recon_loss(const ad::Value& predictions, const ad::Tensor& targets) {
  require(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(),
          "recon_loss: predictions and targets are not aligned");
  require(targets.size() > 0, "recon_loss: empty batch");
  return ad::mean(ad::square(ad::sub(predictions, ad::Value::constant(targets))));
}

ad::Value recon_loss(const LatentModulatedSiren& model, const ad::Value& phi, const ad::Tensor& coords,
                     const ad::Tensor& targets) {
  require(coords.rows() == targets.rows(), "recon_loss: coordinates and targets are not aligned");
  require(coords.rows() > 0, "recon_loss: empty batch");
  return recon_loss(model.forward(phi, ad::Value::constant(coords)), targets);
}

double sum_squared_error(const ad::Tensor& predictions, const ad::Tensor& targets) {
  require(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(),
          "sum_squared_error: shape mismatch");
  return (predictions - targets).squaredNorm();
}

double mean_squared_error(const ad::Tensor& predictions, const ad::Tensor& targets) {
  require(targets.size() > 0, "mean_squared_error: empty batch");
  return sum_squared_error(predictions, targets) / static_cast<double>(targets.size());
}

double psnr(double mse) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  if (!(mse > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return -10.0 * std::log10(mse);
}

double dataset_psnr(const std::vector<double>& mses) {
  require(!mses.empty(), "dataset_psnr: empty dataset");
  double total = 0.0;
  for (double m : mses) total += m;
  return psnr(total / static_cast<double>(mses.size()));
}

double voxel_accuracy(const ad::Tensor& predictions, const ad::Tensor& targets) {
  require(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(),
          "voxel_accuracy: shape mismatch");
  require(targets.size() > 0, "voxel_accuracy: empty grid");
  long correct = 0;
  for (ad::Index i = 0; i < targets.size(); ++i) {
    const double t = targets.data()[i];
    require(t == 0.0 || t == 1.0, "voxel_accuracy: targets must be binary");
    const double rounded = predictions.data()[i] >= 0.5 ? 1.0 : 0.0;
    correct += rounded == t ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(targets.size());
}

PerturbationResult perturb_modulation_rmse(const LatentModulatedSiren& model, const ad::Tensor& phi,
                                           int shift_index, double delta, const ad::Tensor& coords,
                                           const ad::Tensor& targets) {
  if (shift_index < 0 || shift_index >= model.shift_dim()) {
    throw ContractViolation("perturb_modulation_rmse: shift index " + std::to_string(shift_index) +
                            " outside [0, " + std::to_string(model.shift_dim()) + ")");
  }
  require(coords.rows() == targets.rows(), "perturb_modulation_rmse: coords/targets misaligned");
  ad::NoGradGuard no_grad;
  const ad::Tensor base_shift = model.shifts(ad::Value::constant(phi)).data();
  ad::Tensor shifted = base_shift;
  shifted(0, shift_index) += delta;
  const ad::Value c = ad::Value::constant(coords);
  const ad::Tensor reference =
      shift_forward(model.config(), model.params(), ad::Value::constant(base_shift), c).data();
  const ad::Tensor perturbed =
      shift_forward(model.config(), model.params(), ad::Value::constant(shifted), c).data();

  PerturbationResult r;
  r.l1_map = (perturbed - reference).cwiseAbs().rowwise().sum();
  r.rmse = std::sqrt(mean_squared_error(perturbed, reference));
  r.rmse_to_targets = std::sqrt(mean_squared_error(perturbed, targets));
  r.layer = shift_index / model.config().width;
  r.unit = shift_index % model.config().width;
  return r;
}

// ---------------------------------------------------------------------------

SignalFitResult fit_siren(Siren& siren, const ad::Tensor& coords, const ad::Tensor& targets,
                          const SignalFitConfig& cfg) {
  require(coords.rows() == targets.rows() && coords.rows() > 0, "fit_siren: bad signal");
  require(cfg.max_steps >= 0 && cfg.eval_every >= 1, "fit_siren: bad schedule");
  Rng rng(cfg.seed);
  auto params = siren.parameters();
  AdamState adam;
  SignalFitResult result;

  auto evaluate = [&](int step) {
    const ad::Tensor pred = siren.evaluate(coords);
    result.steps = step;
    result.mse = mean_squared_error(pred, targets);
    result.psnr = psnr(result.mse);
    if (cfg.binary) result.voxel_accuracy = voxel_accuracy(pred, targets);
    result.curve.emplace_back(step, cfg.binary ? result.voxel_accuracy : result.psnr);
    return (cfg.stop_at_accuracy && cfg.binary && result.voxel_accuracy >= *cfg.stop_at_accuracy) ||
           (cfg.stop_at_psnr && result.psnr >= *cfg.stop_at_psnr);
  };

  const bool full = cfg.batch <= 0 || cfg.batch >= coords.rows();
  ad::Tensor batch_x, batch_y;
  for (int step = 0; step < cfg.max_steps; ++step) {
    if (step % cfg.eval_every == 0 && evaluate(step)) return result;
    if (!full) {
      batch_x.resize(cfg.batch, coords.cols());
      batch_y.resize(cfg.batch, targets.cols());
      for (int i = 0; i < cfg.batch; ++i) {
        const auto r = rng.integer(0, coords.rows() - 1);
        batch_x.row(i) = coords.row(r);
        batch_y.row(i) = targets.row(r);
      }
    }
    const ad::Value loss = recon_loss(siren.forward(ad::Value::constant(full ? coords : batch_x)),
                                      full ? targets : batch_y);
    if (!std::isfinite(loss.item())) {
      throw NumericalError("fit_siren: non-finite loss at step " + std::to_string(step));
    }
    const auto grads = nn::gradients(loss, params);
    adam_step(params, grads, adam, cfg.lr);
  }
  evaluate(cfg.max_steps);
  return result;
}

}  // namespace functa::inr
