#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace functa {

/// Mixes a seed with a stream index into an independent 64-bit seed
/// (SplitMix64 finaliser). Used wherever a result must depend only on
/// (seed, index), e.g. dataset item i or outer iteration k.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic random source used across the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return mean + stddev * normal_(engine_);
  }
  /// Normal truncated to [-2, 2] standard deviations (rejection sampling).
  double truncated_normal(double stddev);
  /// Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }

  /// k distinct indices from [0, n) in random order.
  std::vector<int> choose(int n, int k);
  std::vector<int> permutation(int n) { return choose(n, n); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace functa
