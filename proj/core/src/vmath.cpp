#include "vmath.hpp"

#include <cmath>

#if defined(FUNCTA_HAVE_LIBMVEC) && defined(__AVX2__) && defined(__x86_64__)
#include <immintrin.h>
#define FUNCTA_USE_MVEC 1
extern "C" {
__m256d _ZGVdN4v_sin(__m256d);
__m256d _ZGVdN4v_cos(__m256d);
__m256d _ZGVdN4v_exp(__m256d);
}
#endif

namespace functa::vmath {

namespace {

template <class Vec, class Scalar>
void apply(const double* in, double* out, std::size_t n, Vec vec, Scalar scalar) {
  std::size_t i = 0;
#ifdef FUNCTA_USE_MVEC
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, vec(_mm256_loadu_pd(in + i)));
  }
#else
  (void)vec;
#endif
  for (; i < n; ++i) out[i] = scalar(in[i]);
}

}  // namespace

#ifdef FUNCTA_USE_MVEC
#define FUNCTA_VEC(fn) [](__m256d v) { return fn(v); }
#else
#define FUNCTA_VEC(fn) 0
#endif

void sin(const double* in, double* out, std::size_t n) {
  apply(in, out, n, FUNCTA_VEC(_ZGVdN4v_sin), [](double x) { return std::sin(x); });
}

void cos(const double* in, double* out, std::size_t n) {
  apply(in, out, n, FUNCTA_VEC(_ZGVdN4v_cos), [](double x) { return std::cos(x); });
}

void exp(const double* in, double* out, std::size_t n) {
  apply(in, out, n, FUNCTA_VEC(_ZGVdN4v_exp), [](double x) { return std::exp(x); });
}

}  // namespace functa::vmath
