#include "functa/flow.hpp"

#include <Eigen/LU>
#include <cmath>
#include <numbers>

#include "functa/archive.hpp"
#include "functa/error.hpp"

namespace functa::flow {

namespace {

constexpr const char* kKind = "flow";
constexpr int kVersion = 1;

double inverse_softplus(double v) { return v > 30.0 ? v : std::log(std::expm1(v)); }

ad::Tensor strict_mask(int d, bool lower) {
  ad::Tensor m = ad::Tensor::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (lower ? j < i : j > i) m(i, j) = 1.0;
  return m;
}

ad::Tensor permutation_matrix(const std::vector<int>& perm) {
  const int d = static_cast<int>(perm.size());
  ad::Tensor p = ad::Tensor::Zero(d, d);
  for (int i = 0; i < d; ++i) p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
  return p;
}

}  // namespace

void FlowConfig::validate() const {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("flow: dimension must be even and >= 2, got " + std::to_string(dim));
  if (num_layers < 0) throw ConfigError("flow: num_layers must be >= 0");
  if (hidden < 1) throw ConfigError("flow: hidden width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("flow: dropout must lie in [0, 1)");
  if (num_classes < 0 || (num_classes > 0 && label_dim < 1)) throw ConfigError("flow: invalid label settings");
  if (!(base_std > 0.0)) throw ConfigError("flow: base_std must be positive");
  spline.validate();
}

// ---------------------------------------------------------------------------
// PLU

PluLinear PluLinear::create(int dim, Rng& rng) {
  PluLinear p;
  p.perm = rng.permutation(dim);
  p.lower = ad::Value::parameter(ad::Tensor::Zero(dim, dim));
  p.upper = ad::Value::parameter(ad::Tensor::Zero(dim, dim));
  p.diag_raw = ad::Value::parameter(ad::Tensor::Constant(1, dim, inverse_softplus(1.0 - kMinDiag)));
  return p;
}

ad::Tensor PluLinear::diag() const {
  return diag_raw.data().unaryExpr([](double r) {
    return (r > 0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r))) + kMinDiag;
  });
}

void PluLinear::set_diag(const ad::Tensor& values) {
  require(values.rows() == 1 && values.cols() == dim(), "PluLinear: diagonal must be 1 x dim");
  require((values.array() > kMinDiag).all(), "PluLinear: diagonal entries must exceed 1e-6");
  ad::Value(diag_raw).mutable_data() = values.unaryExpr([](double v) { return inverse_softplus(v - kMinDiag); });
}

ad::Tensor PluLinear::matrix() const {
  const int d = dim();
  const ad::Tensor l = lower.data().cwiseProduct(strict_mask(d, true)) + ad::Tensor::Identity(d, d);
  ad::Tensor u = upper.data().cwiseProduct(strict_mask(d, false));
  u.diagonal() = diag().transpose();
  return permutation_matrix(perm) * l * u;
}

double PluLinear::log_det() const { return diag().array().log().sum(); }

ad::Value PluLinear::forward(const ad::Value& x, ad::Value* log_det) const {
  const int d = dim();
  require(x.cols() == d, "PluLinear: input width mismatch");
  const ad::Value l = ad::add(ad::mul_const(lower, strict_mask(d, true)), ad::Value::constant(ad::Tensor::Identity(d, d)));
  const ad::Value diag_u = ad::add_scalar(ad::softplus(diag_raw), kMinDiag);
  const ad::Value u = ad::add(ad::mul_const(upper, strict_mask(d, false)),
                              ad::mul_const(ad::repeat_rows(diag_u, d), ad::Tensor::Identity(d, d)));
  const ad::Value w = ad::matmul(ad::Value::constant(permutation_matrix(perm)), ad::matmul(l, u));
  if (log_det != nullptr) *log_det = ad::sum(ad::log(diag_u));
  return ad::matmul(x, ad::transpose(w));
}

ad::Tensor PluLinear::inverse(const ad::Tensor& y) const {
  const int d = dim();
  require(y.cols() == d, "PluLinear: input width mismatch");
  const ad::Tensor l = lower.data().cwiseProduct(strict_mask(d, true)) + ad::Tensor::Identity(d, d);
  ad::Tensor u = upper.data().cwiseProduct(strict_mask(d, false));
  u.diagonal() = diag().transpose();
  ad::Tensor cols = permutation_matrix(perm).transpose() * y.transpose();
  l.triangularView<Eigen::UnitLower>().solveInPlace(cols);
  u.triangularView<Eigen::Upper>().solveInPlace(cols);
  return cols.transpose();
}

void PluLinear::collect(std::vector<ad::Value>& params) const {
  params.push_back(lower);
  params.push_back(upper);
  params.push_back(diag_raw);
}

// ---------------------------------------------------------------------------
// Coupling

ad::Value Conditioner::operator()(const ad::Value& in, double dropout, Rng* rng) const {
  ad::Value h = nn::dropout(ad::relu(hidden1(in)), dropout, rng);
  h = nn::dropout(ad::relu(hidden2(h)), dropout, rng);
  return out(h);
}

void Conditioner::collect(std::vector<ad::Value>& params) const {
  hidden1.collect(params);
  hidden2.collect(params);
  out.collect(params);
}

FlowModel FlowModel::create(const FlowConfig& config, std::uint64_t seed) {
  config.validate();
  FlowModel m;
  m.config_ = config;
  Rng rng(seed);
  const int half = config.dim / 2;
  const int in = half + (config.conditional() ? config.label_dim : 0);
  const int p = config.spline.params_per_dim();
  for (int l = 0; l < config.num_layers; ++l) {
    CouplingLayer c;
    c.pass_offset = l % 2 == 0 ? 0 : half;
    c.net.hidden1 = nn::Linear::create(in, config.hidden, nn::Init::kFanIn, rng);
    c.net.hidden2 = nn::Linear::create(config.hidden, config.hidden, nn::Init::kFanIn, rng);
    // Zero output layer: every spline starts as the identity.
    c.net.out = nn::Linear::create(config.hidden, half * p, nn::Init::kZero, rng);
    m.couplings_.push_back(std::move(c));
    m.plus_.push_back(PluLinear::create(config.dim, rng));
  }
  if (config.conditional()) {
    ad::Tensor e(config.num_classes, config.label_dim);
    for (ad::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.truncated_normal(1.0);
    m.embedding_ = ad::Value::parameter(std::move(e));
  }
  return m;
}

std::vector<ad::Value> FlowModel::parameters() const {
  std::vector<ad::Value> params;
  for (std::size_t l = 0; l < couplings_.size(); ++l) {
    couplings_[l].net.collect(params);
    plus_[l].collect(params);
  }
  if (embedding_.defined()) params.push_back(embedding_);
  return params;
}

void FlowModel::check_input(ad::Index rows, ad::Index cols, std::span<const int> labels) const {
  require(cols == config_.dim,
          "flow: expected " + std::to_string(config_.dim) + "-dimensional inputs, got " + std::to_string(cols));
  if (config_.conditional()) {
    require(static_cast<ad::Index>(labels.size()) == rows, "flow: a class-conditional flow needs one label per row");
    for (int l : labels) require(l >= 0 && l < config_.num_classes, "flow: label out of range");
  } else {
    require(labels.empty(), "flow: labels given to an unconditional flow");
  }
}

ad::Value FlowModel::conditioner_input(const ad::Value& pass, std::span<const int> labels) const {
  if (!config_.conditional()) return pass;
  const ad::Value emb = ad::gather_rows(embedding_, std::vector<int>(labels.begin(), labels.end()));
  return ad::concat_cols({pass, emb});
}

ad::Value FlowModel::to_noise(const ad::Value& x, std::span<const int> labels, ad::Value* log_det,
                              Rng* dropout_rng) const {
  check_input(x.rows(), x.cols(), labels);
  const int half = config_.dim / 2;
  ad::Value h = x;
  ad::Value total = ad::Value::zeros(x.rows(), 1);
  for (std::size_t l = 0; l < couplings_.size(); ++l) {
    const auto& c = couplings_[l];
    const int move_offset = half - c.pass_offset;
    const ad::Value pass = ad::slice_cols(h, c.pass_offset, half);
    const ad::Value raw = c.net(conditioner_input(pass, labels), config_.dropout, dropout_rng);
    ad::Value ld;
    const ad::Value moved = spline::rq_spline(ad::slice_cols(h, move_offset, half), raw, config_.spline, false, &ld);
    h = c.pass_offset == 0 ? ad::concat_cols({pass, moved}) : ad::concat_cols({moved, pass});
    ad::Value plu_ld;
    h = plus_[l].forward(h, &plu_ld);
    total = ad::add(total, ad::add(ld, ad::expand(plu_ld, x.rows(), 1)));
  }
  if (log_det != nullptr) *log_det = total;
  return h;
}

ad::Tensor FlowModel::from_noise(const ad::Tensor& z, std::span<const int> labels) const {
  check_input(z.rows(), z.cols(), labels);
  ad::NoGradGuard no_grad;
  const int half = config_.dim / 2;
  ad::Tensor h = z;
  for (std::size_t k = couplings_.size(); k-- > 0;) {
    h = plus_[k].inverse(h);
    const auto& c = couplings_[k];
    const int move_offset = half - c.pass_offset;
    const ad::Value pass = ad::Value::constant(h.middleCols(c.pass_offset, half));
    const ad::Value raw = c.net(conditioner_input(pass, labels), 0.0, nullptr);
    const ad::Value moved =
        spline::rq_spline(ad::Value::constant(h.middleCols(move_offset, half)), raw, config_.spline, true, nullptr);
    h.middleCols(move_offset, half) = moved.data();
  }
  return h;
}

ad::Value gaussian_log_prob(const ad::Value& z, double stddev) {
  const double norm = static_cast<double>(z.cols()) * std::log(stddev * std::sqrt(2.0 * std::numbers::pi));
  return ad::add_scalar(ad::scale(ad::sum_cols(ad::square(z)), -0.5 / (stddev * stddev)), -norm);
}

ad::Value FlowModel::log_prob(const ad::Value& x, std::span<const int> labels, Rng* dropout_rng) const {
  ad::Value ld;
  const ad::Value z = to_noise(x, labels, &ld, dropout_rng);
  return ad::add(gaussian_log_prob(z, config_.base_std), ld);
}

ad::Tensor FlowModel::log_prob(const ad::Tensor& x, std::span<const int> labels) const {
  ad::NoGradGuard no_grad;
  return log_prob(ad::Value::constant(x), labels).data();
}

ad::Tensor FlowModel::sample(int n, double temperature, Rng& rng, std::span<const int> labels) const {
  require(n >= 1, "flow: sample count must be positive");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("flow: temperature must be a finite non-negative number");
  }
  ad::Tensor z(n, config_.dim);
  const double sd = temperature * config_.base_std;
  for (ad::Index i = 0; i < z.size(); ++i) z.data()[i] = sd * rng.normal();
  return from_noise(z, labels);
}

// ---------------------------------------------------------------------------
// Training

double mean_nll(const FlowModel& model, const ad::Tensor& data, std::span<const int> labels) {
  return -model.log_prob(data, labels).mean();
}

FlowTrainResult train_flow(FlowModel& model, const ad::Tensor& data, const std::vector<int>& labels,
                           const FlowTrainConfig& cfg, const ad::Tensor* test_data,
                           const std::vector<int>* test_labels) {
  require(data.rows() >= 1, "train_flow: empty dataset");
  if (cfg.iters < 0 || cfg.batch_size < 1) throw ConfigError("train_flow: invalid iteration count or batch size");
  const int n = static_cast<int>(data.rows());
  const int batch = std::min(cfg.batch_size, n);
  Rng rng(cfg.seed);
  AdamState adam;
  auto params = model.parameters();
  FlowTrainResult result;
  auto evaluate = [&](long it) {
    if (test_data == nullptr) return;
    const std::vector<int> none;
    result.test_nll.emplace_back(it, mean_nll(model, *test_data, test_labels ? *test_labels : none));
  };
  for (long it = 0; it < cfg.iters; ++it) {
    const auto idx = rng.choose(n, batch);
    ad::Tensor x(batch, data.cols());
    std::vector<int> y;
    for (int i = 0; i < batch; ++i) {
      x.row(i) = data.row(idx[static_cast<std::size_t>(i)]);
      if (!labels.empty()) y.push_back(labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    }
    const ad::Value loss = ad::neg(ad::mean(model.log_prob(ad::Value::constant(x), y, &rng)));
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericalError("train_flow: non-finite NLL at iteration " + std::to_string(it));
    result.nll.push_back(value);
    adam_step(params, nn::gradients(loss, params), adam, schedule_lr(it + 1, cfg.schedule));
    for (const auto& p : params) {
      if (!p.data().allFinite()) throw NumericalError("train_flow: parameters diverged at iteration " + std::to_string(it));
    }
    if (cfg.eval_every > 0 && ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iters)) evaluate(it + 1);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

void save_flow(const std::filesystem::path& path, const FlowModel& model) {
  const auto& c = model.config();
  io::Archive a(kKind, kVersion);
  a.set("dim", static_cast<long>(c.dim));
  a.set("num_layers", static_cast<long>(c.num_layers));
  a.set("hidden", static_cast<long>(c.hidden));
  a.set("dropout", c.dropout);
  a.set("num_classes", static_cast<long>(c.num_classes));
  a.set("label_dim", static_cast<long>(c.label_dim));
  a.set("base_std", c.base_std);
  a.set("spline.num_bins", static_cast<long>(c.spline.num_bins));
  a.set("spline.bound", c.spline.bound);
  a.set("spline.min_bin_fraction", c.spline.min_bin_fraction);
  a.set("spline.min_derivative", c.spline.min_derivative);
  const auto& plus = model.plus();
  for (std::size_t l = 0; l < plus.size(); ++l) {
    ad::Tensor perm(1, c.dim);
    for (int i = 0; i < c.dim; ++i) perm(0, i) = plus[l].perm[static_cast<std::size_t>(i)];
    a.add_tensor("perm." + std::to_string(l), perm, io::DType::kI32);
  }
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) a.add_tensor("param." + std::to_string(i), params[i].data(), io::DType::kF64);
  a.save(path);
}

FlowModel load_flow(const std::filesystem::path& path) {
  const io::Archive a = io::Archive::load(path, kKind, kVersion);
  FlowConfig c;
  c.dim = static_cast<int>(a.get_long("dim"));
  c.num_layers = static_cast<int>(a.get_long("num_layers"));
  c.hidden = static_cast<int>(a.get_long("hidden"));
  c.dropout = a.get_double("dropout");
  c.num_classes = static_cast<int>(a.get_long("num_classes"));
  c.label_dim = static_cast<int>(a.get_long("label_dim"));
  c.base_std = a.get_double("base_std");
  c.spline.num_bins = static_cast<int>(a.get_long("spline.num_bins"));
  c.spline.bound = a.get_double("spline.bound");
  c.spline.min_bin_fraction = a.get_double("spline.min_bin_fraction");
  c.spline.min_derivative = a.get_double("spline.min_derivative");
  FlowModel m;
  try {
    m = FlowModel::create(c, 0);
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  for (std::size_t l = 0; l < m.plus().size(); ++l) {
    const ad::Tensor& perm = a.tensor("perm." + std::to_string(l));
    if (perm.size() != c.dim) throw FormatError(path.string() + ": permutation size mismatch");
    for (int i = 0; i < c.dim; ++i) m.plus()[l].perm[static_cast<std::size_t>(i)] = static_cast<int>(perm(0, i));
  }
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ad::Tensor& t = a.tensor("param." + std::to_string(i));
    if (t.rows() != params[i].rows() || t.cols() != params[i].cols()) {
      throw FormatError(path.string() + ": parameter " + std::to_string(i) + " has the wrong shape");
    }
    params[i].mutable_data() = t;
  }
  return m;
}

}  // namespace functa::flow
