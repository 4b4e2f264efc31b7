#include "functa/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "functa/archive.hpp"
#include "functa/error.hpp"

namespace functa::diffusion {

namespace {

constexpr const char* kKind = "ddpm";
constexpr int kVersion = 1;

void check_noise(const ad::Tensor& x, const ad::Tensor& eps) {
  require(x.rows() == eps.rows() && x.cols() == eps.cols(), "diffusion: noise shape differs from data");
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("diffusion: need at least one timestep");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw ConfigError("diffusion: betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  double bar = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double b = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
    s.betas.push_back(b);
    s.alphas.push_back(1.0 - b);
    bar *= 1.0 - b;
    s.alpha_bars.push_back(bar);
  }
  return s;
}

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > steps()) {
    throw ContractViolation("diffusion: timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

ad::Tensor q_sample(const NoiseSchedule& s, const ad::Tensor& x0, const std::vector<int>& t, const ad::Tensor& eps) {
  check_noise(x0, eps);
  require(static_cast<ad::Index>(t.size()) == x0.rows(), "q_sample: one timestep per row required");
  ad::Tensor out(x0.rows(), x0.cols());
  for (ad::Index i = 0; i < x0.rows(); ++i) {
    const double bar = s.alpha_bar(t[static_cast<std::size_t>(i)]);
    out.row(i) = std::sqrt(bar) * x0.row(i) + std::sqrt(1.0 - bar) * eps.row(i);
  }
  return out;
}

ad::Tensor q_sample(const NoiseSchedule& s, const ad::Tensor& x0, int t, const ad::Tensor& eps) {
  return q_sample(s, x0, std::vector<int>(static_cast<std::size_t>(x0.rows()), t), eps);
}

ad::Tensor q_step(const NoiseSchedule& s, const ad::Tensor& x_prev, int t, const ad::Tensor& eps) {
  check_noise(x_prev, eps);
  return std::sqrt(s.alpha(t)) * x_prev + std::sqrt(s.beta(t)) * eps;
}

ad::Tensor timestep_embedding(const std::vector<int>& t, int dim) {
  require(dim >= 2 && dim % 2 == 0, "timestep_embedding: dimension must be even");
  const int half = dim / 2;
  ad::Tensor out(static_cast<ad::Index>(t.size()), dim);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / std::max(half - 1, 1));
      const double arg = t[i] * freq;
      out(static_cast<ad::Index>(i), k) = std::sin(arg);
      out(static_cast<ad::Index>(i), half + k) = std::cos(arg);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Noise predictor

void EpsNetConfig::validate() const {
  if (dim < 1 || width < 1 || blocks < 0) throw ConfigError("eps-net: dim and width must be positive, blocks >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("eps-net: dropout must lie in [0, 1)");
  if (time_dim < 2 || time_dim % 2 != 0) throw ConfigError("eps-net: time embedding size must be even");
}

EpsNet EpsNet::create(const EpsNetConfig& config, std::uint64_t seed) {
  config.validate();
  EpsNet net;
  net.config_ = config;
  Rng rng(seed);
  net.input_ = nn::Linear::create(config.dim, config.width, nn::Init::kFanIn, rng);
  net.time1_ = nn::Linear::create(config.time_dim, config.width, nn::Init::kFanIn, rng);
  net.time2_ = nn::Linear::create(config.width, config.width, nn::Init::kFanIn, rng);
  for (int b = 0; b < config.blocks; ++b) {
    ResidualBlock block;
    block.in = nn::Linear::create(config.width, config.width, nn::Init::kFanIn, rng);
    block.time = nn::Linear::create(config.width, config.width, nn::Init::kFanIn, rng);
    block.out = nn::Linear::create(config.width, config.width, nn::Init::kFanIn, rng);
    net.blocks_.push_back(std::move(block));
  }
  net.final_ = nn::Linear::create(config.width, config.dim, nn::Init::kZero, rng);
  return net;
}

ad::Value EpsNet::operator()(const ad::Value& x, const std::vector<int>& t, Rng* dropout_rng) const {
  require(x.cols() == config_.dim, "eps-net: input width mismatch");
  require(static_cast<ad::Index>(t.size()) == x.rows(), "eps-net: one timestep per row required");
  // The time MLP runs once per distinct timestep.
  std::vector<int> unique;
  std::vector<int> slot(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto it = std::find(unique.begin(), unique.end(), t[i]);
    slot[i] = static_cast<int>(it - unique.begin());
    if (it == unique.end()) unique.push_back(t[i]);
  }
  const ad::Value emb = ad::Value::constant(timestep_embedding(unique, config_.time_dim));
  ad::Value temb = time2_(ad::silu(time1_(emb)));
  temb = ad::gather_rows(temb, slot);
  ad::Value h = input_(x);
  for (const auto& b : blocks_) {
    const ad::Value inner = ad::add(b.in(ad::silu(h)), b.time(temb));
    h = ad::add(h, b.out(nn::dropout(ad::silu(inner), config_.dropout, dropout_rng)));
  }
  return final_(ad::silu(h));
}

std::vector<ad::Value> EpsNet::parameters() const {
  std::vector<ad::Value> params;
  input_.collect(params);
  time1_.collect(params);
  time2_.collect(params);
  for (const auto& b : blocks_) {
    b.in.collect(params);
    b.time.collect(params);
    b.out.collect(params);
  }
  final_.collect(params);
  return params;
}

DdpmModel DdpmModel::create(const EpsNetConfig& config, std::uint64_t seed, int steps) {
  return DdpmModel{NoiseSchedule::linear(steps), EpsNet::create(config, seed)};
}

// ---------------------------------------------------------------------------
// Loss and sampling

ad::Value ddpm_loss(const DdpmModel& model, const ad::Tensor& x0, const std::vector<int>& t, const ad::Tensor& eps,
                    Rng* dropout_rng) {
  const ad::Tensor xt = q_sample(model.schedule, x0, t, eps);
  const ad::Value pred = model.net(ad::Value::constant(xt), t, dropout_rng);
  return ad::mean(ad::square(ad::sub(ad::Value::constant(eps), pred)));
}

ad::Value ddpm_loss(const DdpmModel& model, const ad::Tensor& x0, Rng& rng, Rng* dropout_rng) {
  std::vector<int> t(static_cast<std::size_t>(x0.rows()));
  for (auto& v : t) v = static_cast<int>(rng.integer(1, model.schedule.steps()));
  ad::Tensor eps(x0.rows(), x0.cols());
  for (ad::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
  return ddpm_loss(model, x0, t, eps, dropout_rng);
}

ad::Tensor p_sample_step(const NoiseSchedule& s, const ad::Tensor& x_t, int t, const ad::Tensor& eps_pred,
                         const ad::Tensor& noise) {
  check_noise(x_t, eps_pred);
  const double coef = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
  ad::Tensor mean = (x_t - coef * eps_pred) / std::sqrt(s.alpha(t));
  if (t > 1) {
    check_noise(x_t, noise);
    mean += std::sqrt(s.beta(t)) * noise;
  }
  return mean;
}

ad::Tensor p_sample_step(const DdpmModel& model, const ad::Tensor& x_t, int t, const ad::Tensor& noise) {
  ad::NoGradGuard no_grad;
  const std::vector<int> ts(static_cast<std::size_t>(x_t.rows()), t);
  return p_sample_step(model.schedule, x_t, t, model.net(ad::Value::constant(x_t), ts).data(), noise);
}

ad::Tensor sample(const NoiseSchedule& s, const EpsFn& eps, int n, int dim, Rng& rng) {
  require(n >= 1 && dim >= 1, "diffusion: sample shape must be positive");
  auto gaussian = [&] {
    ad::Tensor z(n, dim);
    for (ad::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
    return z;
  };
  ad::Tensor x = gaussian();
  for (int t = s.steps(); t >= 1; --t) {
    const ad::Tensor noise = t > 1 ? gaussian() : ad::Tensor::Zero(n, dim);
    x = p_sample_step(s, x, t, eps(x, t), noise);
  }
  return x;
}

ad::Tensor sample(const DdpmModel& model, int n, Rng& rng) {
  ad::NoGradGuard no_grad;
  const EpsFn eps = [&](const ad::Tensor& x, int t) {
    return model.net(ad::Value::constant(x), std::vector<int>(static_cast<std::size_t>(x.rows()), t)).data();
  };
  return sample(model.schedule, eps, n, model.dim(), rng);
}

double untrained_sample_variance(const NoiseSchedule& s) {
  double v = 1.0;
  for (int t = s.steps(); t >= 1; --t) v = v / s.alpha(t) + (t > 1 ? s.beta(t) : 0.0);
  return v;
}

// ---------------------------------------------------------------------------
// Training and persistence

std::vector<double> train_ddpm(DdpmModel& model, const ad::Tensor& data, const DdpmTrainConfig& cfg) {
  require(data.rows() >= 1 && data.cols() == model.dim(), "train_ddpm: data does not match the model dimension");
  if (cfg.iters < 0 || cfg.batch_size < 1) throw ConfigError("train_ddpm: invalid iteration count or batch size");
  const int n = static_cast<int>(data.rows());
  const int batch = std::min(cfg.batch_size, n);
  Rng rng(cfg.seed);
  Rng dropout_rng(mix_seed(cfg.seed, 1));
  AdamState adam;
  auto params = model.net.parameters();
  std::vector<double> losses;
  for (long it = 0; it < cfg.iters; ++it) {
    const auto idx = rng.choose(n, batch);
    ad::Tensor x(batch, data.cols());
    for (int i = 0; i < batch; ++i) x.row(i) = data.row(idx[static_cast<std::size_t>(i)]);
    const ad::Value loss = ddpm_loss(model, x, rng, &dropout_rng);
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericalError("train_ddpm: non-finite loss at iteration " + std::to_string(it));
    losses.push_back(value);
    adam_step(params, nn::gradients(loss, params), adam, schedule_lr(it + 1, cfg.schedule));
  }
  return losses;
}

void save_ddpm(const std::filesystem::path& path, const DdpmModel& model) {
  const auto& c = model.net.config();
  io::Archive a(kKind, kVersion);
  a.set("dim", static_cast<long>(c.dim));
  a.set("width", static_cast<long>(c.width));
  a.set("blocks", static_cast<long>(c.blocks));
  a.set("dropout", c.dropout);
  a.set("time_dim", static_cast<long>(c.time_dim));
  a.set("steps", static_cast<long>(model.schedule.steps()));
  a.set("beta_start", model.schedule.betas.front());
  a.set("beta_end", model.schedule.betas.back());
  const auto params = model.net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    a.add_tensor("param." + std::to_string(i), params[i].data(), io::DType::kF64);
  }
  a.save(path);
}

DdpmModel load_ddpm(const std::filesystem::path& path) {
  const io::Archive a = io::Archive::load(path, kKind, kVersion);
  EpsNetConfig c;
  c.dim = static_cast<int>(a.get_long("dim"));
  c.width = static_cast<int>(a.get_long("width"));
  c.blocks = static_cast<int>(a.get_long("blocks"));
  c.dropout = a.get_double("dropout");
  c.time_dim = static_cast<int>(a.get_long("time_dim"));
  DdpmModel m;
  try {
    m.schedule = NoiseSchedule::linear(static_cast<int>(a.get_long("steps")), a.get_double("beta_start"),
                                       a.get_double("beta_end"));
    m.net = EpsNet::create(c, 0);
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  auto params = m.net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ad::Tensor& t = a.tensor("param." + std::to_string(i));
    if (t.rows() != params[i].rows() || t.cols() != params[i].cols()) {
      throw FormatError(path.string() + ": parameter " + std::to_string(i) + " has the wrong shape");
    }
    params[i].mutable_data() = t;
  }
  return m;
}

}  // namespace functa::diffusion
