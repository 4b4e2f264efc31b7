#include "functa/functaset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "functa/archive.hpp"
#include "functa/error.hpp"

namespace functa {

namespace {

constexpr const char* kKind = "functaset";

ad::Tensor int_column(const std::vector<int>& v) {
  ad::Tensor t(static_cast<ad::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) t(static_cast<ad::Index>(i), 0) = v[i];
  return t;
}

std::vector<int> to_ints(const ad::Tensor& t) {
  std::vector<int> out(static_cast<std::size_t>(t.size()));
  for (ad::Index i = 0; i < t.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<int>(t.data()[i]);
  return out;
}

void check_dims(const ad::Tensor& phi, const NormStats& stats) {
  if (phi.cols() != stats.dim()) {
    throw ContractViolation("normalize: modulation has " + std::to_string(phi.cols()) +
                            " dimensions, statistics have " + std::to_string(stats.dim()));
  }
}

}  // namespace

NormStats compute_stats(const ad::Tensor& modulations, double norm_factor) {
  require(modulations.rows() >= 1 && modulations.cols() >= 1, "compute_stats: empty modulation matrix");
  require(norm_factor > 0.0, "compute_stats: norm_factor must be positive");
  NormStats s;
  s.norm_factor = norm_factor;
  s.mean = modulations.colwise().mean();
  const ad::Tensor centered = modulations.rowwise() - s.mean.row(0);
  s.std = (centered.colwise().squaredNorm() / static_cast<double>(modulations.rows())).cwiseSqrt();
  for (ad::Index j = 0; j < s.std.cols(); ++j) {
    if (!(s.std(0, j) > 0.0)) {
      s.std(0, j) = 1.0;
      s.zero_std_dims.push_back(static_cast<int>(j));
    }
  }
  return s;
}

ad::Tensor normalize(const ad::Tensor& phi, const NormStats& stats) {
  check_dims(phi, stats);
  ad::Tensor out = phi.rowwise() - stats.mean.row(0);
  out.array().rowwise() /= stats.std.row(0).array();
  out.array() /= stats.norm_factor;
  return out;
}

ad::Tensor denormalize(const ad::Tensor& z, const NormStats& stats) {
  check_dims(z, stats);
  ad::Tensor out = z.array() * stats.norm_factor;
  out.array().rowwise() *= stats.std.row(0).array();
  out.rowwise() += stats.mean.row(0);
  return out;
}

ad::Value normalize(const ad::Value& phi, const NormStats& stats) {
  check_dims(phi.data(), stats);
  const ad::Index n = phi.rows();
  const ad::Value centered = ad::sub(phi, ad::Value::constant(stats.mean.replicate(n, 1)));
  const ad::Value scaled = ad::div(centered, ad::Value::constant(stats.std.replicate(n, 1)));
  return ad::div(scaled, ad::Value::full(n, phi.cols(), stats.norm_factor));
}

int Functaset::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

void Functaset::validate() const {
  require(size() >= 1, "functaset: needs at least one modulation");
  require(modulations.cols() == latent_dim, "functaset: modulation width differs from latent_dim");
  require(stats.dim() == latent_dim && stats.std.cols() == latent_dim, "functaset: statistics dimension mismatch");
  require((stats.std.array() > 0.0).all(), "functaset: statistics contain a non-positive std");
  require(stats.norm_factor > 0.0, "functaset: norm_factor must be positive");
  require(labels.empty() || static_cast<int>(labels.size()) == size(), "functaset: one label per row required");
  for (int l : labels) require(l >= 0, "functaset: labels must be non-negative");
  require(metrics.empty() || static_cast<int>(metrics.size()) == size(), "functaset: one metric per row required");
  require(source_index.empty() || static_cast<int>(source_index.size()) == size(),
          "functaset: one source index per row required");
  require(split == "train" || split == "test", "functaset: split must be 'train' or 'test'");
  require(modulations.allFinite(), "functaset: non-finite modulation");
}

ad::Tensor round_to_float32(const ad::Tensor& t) {
  return t.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

void save_functaset(const std::filesystem::path& path, const Functaset& set) {
  set.validate();
  io::Archive a(kKind, Functaset::kVersion);
  a.set("split", set.split);
  a.set("latent_dim", set.latent_dim);
  a.set("size", set.size());
  a.set("siren.in_dim", set.config.in_dim);
  a.set("siren.out_dim", set.config.out_dim);
  a.set("siren.width", set.config.width);
  a.set("siren.depth", set.config.depth);
  a.set("siren.omega0", set.config.omega0);
  a.set("base_digest", set.base_digest);
  a.set("norm_factor", set.stats.norm_factor);
  a.set("labelled", set.labelled() ? "1" : "0");
  a.set("num_classes", set.num_classes());
  std::string zero, excluded;
  for (int d : set.stats.zero_std_dims) zero += (zero.empty() ? "" : ",") + std::to_string(d);
  for (int d : set.excluded) excluded += (excluded.empty() ? "" : ",") + std::to_string(d);
  a.set("zero_std_dims", zero.empty() ? "-" : zero);
  a.set("excluded", excluded.empty() ? "-" : excluded);
  a.add_tensor("stats.mean", set.stats.mean, io::DType::kF64);
  a.add_tensor("stats.std", set.stats.std, io::DType::kF64);
  a.add_tensor("modulations", set.modulations, io::DType::kF32);
  if (set.labelled()) a.add_tensor("labels", int_column(set.labels), io::DType::kI32);
  if (!set.metrics.empty()) {
    a.add_tensor("metrics", Eigen::Map<const ad::Tensor>(set.metrics.data(), set.size(), 1), io::DType::kF64);
  }
  if (!set.source_index.empty()) a.add_tensor("source_index", int_column(set.source_index), io::DType::kI32);
  a.save(path);
}

Functaset load_functaset(const std::filesystem::path& path) {
  const io::Archive a = io::Archive::load(path, kKind, Functaset::kVersion);
  auto int_list = [](const std::string& s) {
    std::vector<int> out;
    if (s == "-") return out;
    std::size_t start = 0;
    while (start <= s.size()) {
      const std::size_t comma = std::min(s.find(',', start), s.size());
      out.push_back(static_cast<int>(io::parse_long(s.substr(start, comma - start))));
      start = comma + 1;
    }
    return out;
  };
  Functaset set;
  set.split = a.get("split");
  set.latent_dim = static_cast<int>(a.get_long("latent_dim"));
  set.config.in_dim = static_cast<int>(a.get_long("siren.in_dim"));
  set.config.out_dim = static_cast<int>(a.get_long("siren.out_dim"));
  set.config.width = static_cast<int>(a.get_long("siren.width"));
  set.config.depth = static_cast<int>(a.get_long("siren.depth"));
  set.config.omega0 = a.get_double("siren.omega0");
  set.base_digest = a.get("base_digest");
  set.stats.norm_factor = a.get_double("norm_factor");
  set.stats.zero_std_dims = int_list(a.get("zero_std_dims"));
  set.excluded = int_list(a.get("excluded"));
  set.stats.mean = a.tensor("stats.mean");
  set.stats.std = a.tensor("stats.std");
  set.modulations = a.tensor("modulations");
  if (a.has_tensor("labels")) set.labels = to_ints(a.tensor("labels"));
  if (a.has_tensor("metrics")) {
    const auto& m = a.tensor("metrics");
    set.metrics.assign(m.data(), m.data() + m.size());
  }
  if (a.has_tensor("source_index")) set.source_index = to_ints(a.tensor("source_index"));
  if (a.get_long("size") != set.size()) throw FormatError("functaset: row count does not match header");
  try {
    set.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return set;
}

}  // namespace functa
