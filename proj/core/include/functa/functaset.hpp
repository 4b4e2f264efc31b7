#pragma once

// Datasets of modulation vectors and their normalisation statistics.

#include <filesystem>
#include <string>
#include <vector>

#include "functa/ad.hpp"
#include "functa/inr.hpp"

namespace functa {

/// Per-dimension statistics of a training split.
struct NormStats {
  ad::Tensor mean;  // 1 x latent_dim
  ad::Tensor std;   // 1 x latent_dim, strictly positive
  /// Dimensions whose observed std was zero (stored with std 1).
  std::vector<int> zero_std_dims;
  double norm_factor = 4.0;

  int dim() const { return static_cast<int>(mean.cols()); }
};

/// Population mean and standard deviation over the rows of `modulations`.
NormStats compute_stats(const ad::Tensor& modulations, double norm_factor = 4.0);

/// (phi - mean) / std / norm_factor, applied to every row.
ad::Tensor normalize(const ad::Tensor& phi, const NormStats& stats);
ad::Tensor denormalize(const ad::Tensor& z, const NormStats& stats);
/// Differentiable variant for MAP inference.
ad::Value normalize(const ad::Value& phi, const NormStats& stats);

struct Functaset {
  static constexpr int kVersion = 1;

  inr::SirenConfig config;
  int latent_dim = 0;
  /// Digest of the frozen base network the modulations were fitted with.
  std::string base_digest;
  std::string split = "train";
  /// N x latent_dim; values are float32-representable.
  ad::Tensor modulations;
  NormStats stats;
  /// Empty when the dataset is unlabelled.
  std::vector<int> labels;
  /// Reconstruction MSE of each row on its full signal.
  std::vector<double> metrics;
  /// Dataset index each row was fitted from.
  std::vector<int> source_index;
  /// Dataset indices that were dropped because fitting produced non-finite values.
  std::vector<int> excluded;

  int size() const { return static_cast<int>(modulations.rows()); }
  bool labelled() const { return !labels.empty(); }
  int num_classes() const;
  /// Throws ContractViolation when the invariants do not hold.
  void validate() const;
  ad::Tensor normalized() const { return normalize(modulations, stats); }
};

/// Modulations rounded to float32, as they are persisted.
ad::Tensor round_to_float32(const ad::Tensor& t);

void save_functaset(const std::filesystem::path& path, const Functaset& set);
/// Throws VersionMismatch, DigestMismatch, TruncatedFile or FormatError.
Functaset load_functaset(const std::filesystem::path& path);

}  // namespace functa
