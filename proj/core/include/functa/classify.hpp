#pragma once

// MLP classifiers trained directly on normalised modulation vectors.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "functa/ad.hpp"
#include "functa/functaset.hpp"
#include "functa/nn.hpp"

namespace functa::classify {

struct ClassifierConfig {
  int input_dim = 0;
  int width = 128;
  /// Number of hidden layers.
  int depth = 4;
  int num_classes = 10;
  double dropout = 0.0;
  double lr = 1e-4;
  int batch_size = 1024;
  long iters = 30000;
  std::uint64_t seed = 0;
  /// Decay of the moving average applied to the reported accuracies.
  double ema_decay = 0.99;
  /// Test accuracy is measured every `eval_every` iterations and at the end.
  long eval_every = 100;

  /// Throws ConfigError.
  void validate() const;
};

/// input -> depth x (Linear, SiLU, dropout) -> Linear -> logits.
class Classifier {
 public:
  Classifier() = default;
  static Classifier create(const ClassifierConfig& config, const NormStats& stats);

  const ClassifierConfig& config() const { return config_; }
  /// Statistics used to normalise raw modulations before the first layer.
  const NormStats& stats() const { return stats_; }

  /// Logits for already-normalised inputs. Pass an Rng to enable dropout.
  ad::Value logits(const ad::Value& z, Rng* dropout_rng = nullptr) const;
  /// Argmax class of each raw modulation row; dropout is never applied.
  std::vector<int> predict(const ad::Tensor& modulations) const;

  std::vector<ad::Value> parameters() const;
  long num_parameters() const { return nn::count_scalars(parameters()); }

 private:
  ClassifierConfig config_;
  NormStats stats_;
  std::vector<nn::Linear> layers_;
};

/// Mean cross-entropy of the rows of `logits` against integer labels.
ad::Value cross_entropy(const ad::Value& logits, std::span<const int> labels);

struct Evaluation {
  double accuracy = 0.0;
  /// Accuracy within each true class; 0 for classes without examples.
  std::vector<double> per_class;
  std::vector<long> class_counts;
  /// confusion[true][predicted].
  std::vector<std::vector<long>> confusion;
};

Evaluation evaluate_predictions(std::span<const int> predicted, std::span<const int> labels, int num_classes);
Evaluation evaluate(const Classifier& model, const Functaset& set);

struct CurvePoint {
  long iter = 0;
  double loss = 0.0;
  /// Moving averages of the mini-batch accuracy and of the measured test accuracy.
  double train_accuracy_ema = 0.0;
  double test_accuracy = 0.0;
  double test_accuracy_ema = 0.0;
};

struct TrainResult {
  Classifier model;
  std::vector<double> losses;
  std::vector<CurvePoint> curve;
};

/// Adam at a fixed learning rate on cross-entropy over the normalised
/// modulations of `train` (normalised with train.stats). When `test` is given
/// its accuracy is tracked in the curve. Throws ConfigError for missing
/// labels or labels outside [0, num_classes).
TrainResult train_classifier(const Functaset& train, const Functaset* test, const ClassifierConfig& cfg);

void save_classifier(const std::filesystem::path& path, const Classifier& model);
Classifier load_classifier(const std::filesystem::path& path);

}  // namespace functa::classify
