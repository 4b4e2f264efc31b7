#include "functa/classify.hpp"

#include <algorithm>
#include <cmath>

#include "functa/archive.hpp"
#include "functa/error.hpp"
#include "functa/optim.hpp"
#include "functa/rng.hpp"

namespace functa::classify {

namespace {

constexpr const char* kKind = "classifier";
constexpr int kVersion = 1;

void check_labels(const Functaset& set, int num_classes, const char* split) {
  if (!set.labelled()) throw ConfigError(std::string("classifier: ") + split + " functaset has no labels");
  for (int l : set.labels) {
    if (l < 0 || l >= num_classes) {
      throw ConfigError(std::string("classifier: ") + split + " label " + std::to_string(l) +
                        " outside the configured " + std::to_string(num_classes) + " classes");
    }
  }
}

}  // namespace

void ClassifierConfig::validate() const {
  if (input_dim < 1) throw ConfigError("classifier: input_dim must be positive");
  if (width < 1 || depth < 0) throw ConfigError("classifier: invalid width or depth");
  if (num_classes < 2) throw ConfigError("classifier: needs at least two classes");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("classifier: dropout must lie in [0, 1)");
  if (!(lr > 0.0) || batch_size < 1 || iters < 0) throw ConfigError("classifier: invalid lr, batch size or iters");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("classifier: ema_decay must lie in [0, 1)");
  if (eval_every < 1) throw ConfigError("classifier: eval_every must be positive");
}

Classifier Classifier::create(const ClassifierConfig& config, const NormStats& stats) {
  config.validate();
  require(stats.dim() == config.input_dim, "classifier: statistics do not match input_dim");
  Classifier c;
  c.config_ = config;
  c.stats_ = stats;
  Rng rng(config.seed);
  int in = config.input_dim;
  for (int i = 0; i < config.depth; ++i) {
    c.layers_.push_back(nn::Linear::create(in, config.width, nn::Init::kFanIn, rng));
    in = config.width;
  }
  c.layers_.push_back(nn::Linear::create(in, config.num_classes, nn::Init::kFanIn, rng));
  return c;
}

ad::Value Classifier::logits(const ad::Value& z, Rng* dropout_rng) const {
  require(z.cols() == config_.input_dim, "classifier: input width differs from input_dim");
  ad::Value h = z;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    h = nn::dropout(ad::silu(layers_[i](h)), config_.dropout, dropout_rng);
  }
  return layers_.back()(h);
}

std::vector<int> Classifier::predict(const ad::Tensor& modulations) const {
  ad::NoGradGuard guard;
  const ad::Tensor out = logits(ad::Value::constant(normalize(modulations, stats_))).data();
  std::vector<int> pred(static_cast<std::size_t>(out.rows()));
  for (ad::Index i = 0; i < out.rows(); ++i) {
    ad::Index best = 0;
    out.row(i).maxCoeff(&best);
    pred[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return pred;
}

std::vector<ad::Value> Classifier::parameters() const {
  std::vector<ad::Value> p;
  for (const auto& l : layers_) l.collect(p);
  return p;
}

ad::Value cross_entropy(const ad::Value& logits, std::span<const int> labels) {
  require(static_cast<ad::Index>(labels.size()) == logits.rows(), "cross_entropy: one label per row required");
  ad::Tensor onehot = ad::Tensor::Zero(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < logits.cols(), "cross_entropy: label out of range");
    onehot(static_cast<ad::Index>(i), labels[i]) = 1.0;
  }
  const ad::Value picked = ad::sum_cols(ad::mul_const(logits, onehot));
  return ad::mean(ad::sub(ad::logsumexp_rows(logits), picked));
}

Evaluation evaluate_predictions(std::span<const int> predicted, std::span<const int> labels, int num_classes) {
  require(predicted.size() == labels.size(), "evaluate: prediction and label counts differ");
  require(num_classes >= 1, "evaluate: num_classes must be positive");
  Evaluation e;
  const auto k = static_cast<std::size_t>(num_classes);
  e.confusion.assign(k, std::vector<long>(k, 0));
  e.class_counts.assign(k, 0);
  e.per_class.assign(k, 0.0);
  long correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < num_classes && predicted[i] >= 0 && predicted[i] < num_classes,
            "evaluate: class index out of range");
    ++e.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predicted[i])];
    ++e.class_counts[static_cast<std::size_t>(labels[i])];
    correct += predicted[i] == labels[i];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (e.class_counts[c] > 0) e.per_class[c] = static_cast<double>(e.confusion[c][c]) / e.class_counts[c];
  }
  e.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  return e;
}

Evaluation evaluate(const Classifier& model, const Functaset& set) {
  check_labels(set, model.config().num_classes, set.split.c_str());
  return evaluate_predictions(model.predict(set.modulations), set.labels, model.config().num_classes);
}

TrainResult train_classifier(const Functaset& train, const Functaset* test, const ClassifierConfig& cfg) {
  cfg.validate();
  if (train.latent_dim != cfg.input_dim) throw ConfigError("classifier: input_dim differs from the functaset");
  check_labels(train, cfg.num_classes, "train");
  if (test != nullptr) {
    if (test->latent_dim != cfg.input_dim) throw ConfigError("classifier: test functaset has a different dimension");
    check_labels(*test, cfg.num_classes, "test");
  }
  TrainResult r;
  r.model = Classifier::create(cfg, train.stats);
  const ad::Tensor z = normalize(train.modulations, train.stats);
  const int n = train.size();
  const int batch = std::min(cfg.batch_size, n);
  Rng rng(mix_seed(cfg.seed, 1));
  Rng dropout_rng(mix_seed(cfg.seed, 2));
  auto params = r.model.parameters();
  AdamState adam;
  double train_ema = 0.0, test_ema = 0.0;
  bool have_test = false;
  auto record = [&](long it, double loss) {
    CurvePoint p;
    p.iter = it;
    p.loss = loss;
    p.train_accuracy_ema = train_ema;
    if (test != nullptr) {
      p.test_accuracy = evaluate(r.model, *test).accuracy;
      test_ema = have_test ? cfg.ema_decay * test_ema + (1.0 - cfg.ema_decay) * p.test_accuracy : p.test_accuracy;
      have_test = true;
      p.test_accuracy_ema = test_ema;
    }
    r.curve.push_back(p);
  };
  std::vector<int> labels(static_cast<std::size_t>(batch));
  for (long it = 0; it < cfg.iters; ++it) {
    const auto idx = rng.choose(n, batch);
    ad::Tensor x(batch, z.cols());
    for (int i = 0; i < batch; ++i) {
      x.row(i) = z.row(idx[static_cast<std::size_t>(i)]);
      labels[static_cast<std::size_t>(i)] = train.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    }
    const ad::Value logits = r.model.logits(ad::Value::constant(x), &dropout_rng);
    const ad::Value loss = cross_entropy(logits, labels);
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericalError("train_classifier: non-finite loss at iteration " + std::to_string(it));
    r.losses.push_back(value);
    long correct = 0;
    for (int i = 0; i < batch; ++i) {
      ad::Index best = 0;
      logits.data().row(i).maxCoeff(&best);
      correct += best == labels[static_cast<std::size_t>(i)];
    }
    const double acc = static_cast<double>(correct) / batch;
    train_ema = it == 0 ? acc : cfg.ema_decay * train_ema + (1.0 - cfg.ema_decay) * acc;
    adam_step(params, nn::gradients(loss, params), adam, cfg.lr);
    if ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iters) record(it + 1, value);
  }
  return r;
}

void save_classifier(const std::filesystem::path& path, const Classifier& model) {
  const auto& c = model.config();
  io::Archive a(kKind, kVersion);
  a.set("input_dim", c.input_dim);
  a.set("width", c.width);
  a.set("depth", c.depth);
  a.set("num_classes", c.num_classes);
  a.set("dropout", c.dropout);
  a.set("norm_factor", model.stats().norm_factor);
  a.add_tensor("stats.mean", model.stats().mean, io::DType::kF64);
  a.add_tensor("stats.std", model.stats().std, io::DType::kF64);
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    a.add_tensor("param." + std::to_string(i), params[i].data(), io::DType::kF64);
  }
  a.save(path);
}

Classifier load_classifier(const std::filesystem::path& path) {
  const io::Archive a = io::Archive::load(path, kKind, kVersion);
  ClassifierConfig c;
  c.input_dim = static_cast<int>(a.get_long("input_dim"));
  c.width = static_cast<int>(a.get_long("width"));
  c.depth = static_cast<int>(a.get_long("depth"));
  c.num_classes = static_cast<int>(a.get_long("num_classes"));
  c.dropout = a.get_double("dropout");
  NormStats stats;
  stats.norm_factor = a.get_double("norm_factor");
  stats.mean = a.tensor("stats.mean");
  stats.std = a.tensor("stats.std");
  Classifier m;
  try {
    m = Classifier::create(c, stats);
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
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

}  // namespace functa::classify
