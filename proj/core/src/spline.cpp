#include "functa/spline.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "functa/error.hpp"

namespace functa::spline {

namespace {

// Forward-mode dual number with a bounded inline tangent.
constexpr int kMaxTangents = 64;
using Grad = Eigen::Array<double, Eigen::Dynamic, 1, 0, kMaxTangents, 1>;

struct Dual {
  double v = 0.0;
  Grad g;

  Dual() = default;
  Dual(double value, int n) : v(value), g(Grad::Zero(n)) {}
  Dual(double value, Grad grad) : v(value), g(std::move(grad)) {}
};

Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.g + b.g}; }
Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.g - b.g}; }
Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.g * b.v + b.g * a.v}; }
Dual operator/(const Dual& a, const Dual& b) { return {a.v / b.v, (a.g * b.v - b.g * a.v) / (b.v * b.v)}; }
Dual operator+(const Dual& a, double c) { return {a.v + c, a.g}; }
Dual operator*(const Dual& a, double c) { return {a.v * c, a.g * c}; }
Dual operator-(double c, const Dual& a) { return {c - a.v, -a.g}; }
Dual exp(const Dual& a) {
  const double e = std::exp(a.v);
  return {e, a.g * e};
}
Dual log(const Dual& a) { return {std::log(a.v), a.g / a.v}; }
Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.v);
  return {s, a.g / (2.0 * s)};
}
Dual softplus(const Dual& a) {
  const double sp = a.v > 0 ? a.v + std::log1p(std::exp(-a.v)) : std::log1p(std::exp(a.v));
  return {sp, a.g / (1.0 + std::exp(-a.v))};
}

double value(double a) { return a; }
double value(const Dual& a) { return a.v; }
double softplus(double a) { return a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }
using std::exp;
using std::log;
using std::sqrt;

// Knot construction generic over double and Dual. `raw(i)` yields parameter i.
template <class T, class Raw>
void build_knots(Raw raw, const SplineConfig& cfg, std::vector<T>& xs, std::vector<T>& ys, std::vector<T>& ds,
                 const T& zero) {
  const int k = cfg.num_bins;
  const double scale = 1.0 - cfg.min_bin_fraction * k;
  auto positions = [&](int offset, std::vector<T>& out) {
    double mx = value(raw(offset));
    for (int i = 1; i < k; ++i) mx = std::max(mx, value(raw(offset + i)));
    std::vector<T> e;
    e.reserve(static_cast<std::size_t>(k));
    T total = zero;
    for (int i = 0; i < k; ++i) {
      e.push_back(exp(raw(offset + i) + (-mx)));
      total = total + e.back();
    }
    out.assign(static_cast<std::size_t>(k + 1), zero);
    out[0] = zero + (-cfg.bound);
    T acc = zero;
    for (int i = 0; i < k; ++i) {
      acc = acc + (e[static_cast<std::size_t>(i)] / total * scale + cfg.min_bin_fraction);
      out[static_cast<std::size_t>(i + 1)] = acc * (2.0 * cfg.bound) + (-cfg.bound);
    }
    out[static_cast<std::size_t>(k)] = zero + cfg.bound;
  };
  positions(0, xs);
  positions(k, ys);
  // softplus(shift) + min_derivative == 1 at raw 0.
  const double shift = std::log(std::expm1(1.0 - cfg.min_derivative));
  ds.clear();
  for (int i = 0; i <= k; ++i) ds.push_back(softplus(raw(2 * k + i) + shift) + cfg.min_derivative);
}

template <class T>
int find_bin(const std::vector<T>& knots, double v) {
  const int k = static_cast<int>(knots.size()) - 1;
  int lo = 0, hi = k;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (value(knots[static_cast<std::size_t>(mid)]) <= v) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

// Returns (y, log|dy/dx|) for the forward map, or (x, log|dx/dy|) for the
// inverse. Inputs outside the interval pass through.
template <class T>
std::pair<T, T> rq_eval(const T& in, const std::vector<T>& xs, const std::vector<T>& ys, const std::vector<T>& ds,
                        bool inverse, const T& zero) {
  const double lo = value(xs.front()), hi = value(xs.back());
  if (value(in) < lo || value(in) > hi) return {in, zero};
  const int b = find_bin(inverse ? ys : xs, value(in));
  const auto i = static_cast<std::size_t>(b);
  const T w = xs[i + 1] - xs[i];
  const T h = ys[i + 1] - ys[i];
  const T s = h / w;
  const T& d0 = ds[i];
  const T& d1 = ds[i + 1];
  T theta;
  if (!inverse) {
    theta = (in - xs[i]) / w;
  } else {
    const T dy = in - ys[i];
    const T sum = d1 + d0 - s * 2.0;
    const T a = h * (s - d0) + dy * sum;
    const T bq = h * d0 - dy * sum;
    const T c = zero - s * dy;
    T disc = bq * bq - a * c * 4.0;
    if (value(disc) < 0.0) disc = disc * 0.0;
    theta = (c * 2.0) / (zero - bq - sqrt(disc));
  }
  const T one_minus = 1.0 - theta;
  const T tt = theta * one_minus;
  const T den = s + (d1 + d0 - s * 2.0) * tt;
  const T deriv_num = s * s * (d1 * theta * theta + s * tt * 2.0 + d0 * one_minus * one_minus);
  const T log_deriv = log(deriv_num) - log(den) * 2.0;
  if (!inverse) {
    const T y = ys[i] + h * (s * theta * theta + d0 * tt) / den;
    return {y, log_deriv};
  }
  return {xs[i] + theta * w, zero - log_deriv};
}

}  // namespace

void SplineConfig::validate() const {
  if (num_bins < 1 || params_per_dim() + 1 > kMaxTangents) {
    throw ConfigError("spline: num_bins must lie in [1, " + std::to_string((kMaxTangents - 2) / 3) + "]");
  }
  if (!(bound > 0.0)) throw ConfigError("spline: bound must be positive");
  if (!(min_bin_fraction >= 0.0 && min_bin_fraction * num_bins < 1.0)) {
    throw ConfigError("spline: min_bin_fraction * num_bins must be below 1");
  }
  if (!(min_derivative > 0.0 && min_derivative < 1.0)) throw ConfigError("spline: min_derivative must lie in (0, 1)");
}

Knots make_knots(const double* raw, const SplineConfig& cfg) {
  Knots k;
  build_knots<double>([raw](int i) { return raw[i]; }, cfg, k.x, k.y, k.d, 0.0);
  return k;
}

void check_knots(const Knots& k, double bound) {
  const std::size_t n = k.x.size();
  require(n >= 2 && k.y.size() == n && k.d.size() == n, "spline: knot arrays disagree in length");
  require(k.x.front() == -bound && k.x.back() == bound && k.y.front() == -bound && k.y.back() == bound,
          "spline: knots must span [-B, B]");
  for (std::size_t i = 0; i + 1 < n; ++i) {
    require(k.x[i + 1] > k.x[i] && k.y[i + 1] > k.y[i], "spline: knots are not strictly increasing");
  }
  for (double d : k.d) require(d > 0.0 && std::isfinite(d), "spline: derivatives must be positive");
}

ScalarResult rq_forward(double x, const Knots& k) {
  const auto [y, ld] = rq_eval<double>(x, k.x, k.y, k.d, false, 0.0);
  return {y, ld};
}

ScalarResult rq_inverse(double y, const Knots& k) {
  const auto [x, ld] = rq_eval<double>(y, k.x, k.y, k.d, true, 0.0);
  return {x, ld};
}

ad::Value rq_spline(const ad::Value& x, const ad::Value& raw, const SplineConfig& cfg, bool inverse,
                    ad::Value* log_det) {
  cfg.validate();
  const ad::Index n = x.rows(), d = x.cols();
  const int p = cfg.params_per_dim();
  require(raw.rows() == n && raw.cols() == d * p,
          "rq_spline: expected raw parameters of shape n x " + std::to_string(d * p));
  const ad::Tensor& xv = x.data();
  const ad::Tensor& rv = raw.data();
  require(xv.allFinite() && rv.allFinite(), "rq_spline: non-finite input");

  // Output packs y (n x d) next to the per-element log-determinants.
  ad::Tensor out(n, 2 * d);
  const bool need_grad = ad::grad_enabled() && (x.requires_grad() || raw.requires_grad());
  // Per element: d(y, ld)/d(x, raw_0..raw_{p-1}).
  std::vector<ad::Tensor> jac;
  if (need_grad) jac.assign(static_cast<std::size_t>(n * d), ad::Tensor());

  for (ad::Index r = 0; r < n; ++r) {
    for (ad::Index c = 0; c < d; ++c) {
      auto raw_at = [&](int i) { return rv(r, c * p + i); };
      if (!need_grad) {
        Knots k;
        build_knots<double>(raw_at, cfg, k.x, k.y, k.d, 0.0);
        const auto [y, ld] = rq_eval<double>(xv(r, c), k.x, k.y, k.d, inverse, 0.0);
        out(r, c) = y;
        out(r, d + c) = ld;
        continue;
      }
      const int nt = p + 1;
      const Dual zero(0.0, nt);
      auto raw_dual = [&](int i) {
        Dual v(raw_at(i), nt);
        v.g(i + 1) = 1.0;
        return v;
      };
      std::vector<Dual> xs, ys, ds;
      build_knots<Dual>(raw_dual, cfg, xs, ys, ds, zero);
      Dual in(xv(r, c), nt);
      in.g(0) = 1.0;
      const auto [y, ld] = rq_eval<Dual>(in, xs, ys, ds, inverse, zero);
      out(r, c) = y.v;
      out(r, d + c) = ld.v;
      ad::Tensor j(2, nt);
      j.row(0) = y.g.transpose().matrix();
      j.row(1) = ld.g.transpose().matrix();
      jac[static_cast<std::size_t>(r * d + c)] = std::move(j);
    }
  }

  ad::Value packed;
  if (!need_grad) {
    packed = ad::Value::constant(std::move(out));
  } else {
    auto shared_jac = std::make_shared<std::vector<ad::Tensor>>(std::move(jac));
    packed = ad::custom_op(
        {x, raw}, std::move(out),
        [shared_jac, n, d, p](const ad::Tensor& g) {
          ad::Tensor gx = ad::Tensor::Zero(n, d), graw = ad::Tensor::Zero(n, d * p);
          for (ad::Index r = 0; r < n; ++r) {
            for (ad::Index c = 0; c < d; ++c) {
              const ad::Tensor& j = (*shared_jac)[static_cast<std::size_t>(r * d + c)];
              const Eigen::RowVectorXd v = g(r, c) * j.row(0) + g(r, d + c) * j.row(1);
              gx(r, c) = v(0);
              graw.block(r, c * p, 1, p) = v.tail(p);
            }
          }
          return std::vector<ad::Tensor>{gx, graw};
        },
        inverse ? "rq_spline_inverse" : "rq_spline");
  }
  if (log_det != nullptr) *log_det = ad::sum_cols(ad::slice_cols(packed, d, d));
  return ad::slice_cols(packed, 0, d);
}

}  // namespace functa::spline
