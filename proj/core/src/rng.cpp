#include "functa/rng.hpp"

#include <numeric>

#include "functa/error.hpp"

namespace functa {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::truncated_normal(double stddev) {
  for (;;) {
    const double x = normal_(engine_);
    if (x >= -2.0 && x <= 2.0) return x * stddev;
  }
}

std::vector<int> Rng::choose(int n, int k) {
  require(k >= 0 && k <= n, "Rng::choose: k must lie in [0, n]");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates.
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<int>(integer(i, n - 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace functa
