#include "kernels_impl.hpp"

#if defined(SGDCURVE_HAVE_AVX2_KERNELS)

#include <immintrin.h>

// Functions carry a target attribute instead of the TU being built with
// -mavx2, so no AVX2 code leaks into inline template instantiations that the
// linker may pick for other translation units.
#define SGDCURVE_AVX2 __attribute__((target("avx2,fma")))

namespace sgdcurve::kernels::avx2 {
namespace {

SGDCURVE_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

SGDCURVE_AVX2 inline double combine(__m256d a0, __m256d a1, __m256d a2,
                                    __m256d a3) {
  return hsum(_mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3)));
}

}  // namespace

SGDCURVE_AVX2 double dot(const double* x, const double* y, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = a0, a2 = a0, a3 = a0;
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), a1);
    a2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), a2);
    a3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), a3);
  }
  for (; i + 4 <= n; i += 4) {
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), a0);
  }
  double acc = combine(a0, a1, a2, a3);
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

SGDCURVE_AVX2 void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

SGDCURVE_AVX2 void mul(const double* a, const double* b, double* out,
                       std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

SGDCURVE_AVX2 double weighted_sumsq(const double* w, const double* x,
                                    std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = a0, a2 = a0, a3 = a0;
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __m256d x0 = _mm256_loadu_pd(x + i), x1 = _mm256_loadu_pd(x + i + 4);
    __m256d x2 = _mm256_loadu_pd(x + i + 8), x3 = _mm256_loadu_pd(x + i + 12);
    a0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), x0), x0, a0);
    a1 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i + 4), x1), x1, a1);
    a2 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i + 8), x2), x2, a2);
    a3 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i + 12), x3), x3, a3);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d x0 = _mm256_loadu_pd(x + i);
    a0 = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), x0), x0, a0);
  }
  double acc = combine(a0, a1, a2, a3);
  for (; i < n; ++i) acc += w[i] * x[i] * x[i];
  return acc;
}

SGDCURVE_AVX2 double diag_rank1_step(double* c, const double* a,
                                     const double* lambda, double beta,
                                     std::size_t n) {
  const __m256d vb = _mm256_set1_pd(beta);
  __m256d a0 = _mm256_setzero_pd(), a1 = a0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d l0 = _mm256_loadu_pd(lambda + i), l1 = _mm256_loadu_pd(lambda + i + 4);
    __m256d c0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(c + i), _mm256_mul_pd(vb, l0));
    __m256d c1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(c + i + 4), _mm256_mul_pd(vb, l1));
    _mm256_storeu_pd(c + i, c0);
    _mm256_storeu_pd(c + i + 4, c1);
    a0 = _mm256_fmadd_pd(l0, c0, a0);
    a1 = _mm256_fmadd_pd(l1, c1, a1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d l0 = _mm256_loadu_pd(lambda + i);
    __m256d c0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(c + i), _mm256_mul_pd(vb, l0));
    _mm256_storeu_pd(c + i, c0);
    a0 = _mm256_fmadd_pd(l0, c0, a0);
  }
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) {
    c[i] = a[i] * c[i] + beta * lambda[i];
    acc += lambda[i] * c[i];
  }
  return acc;
}

SGDCURVE_AVX2 double decay_dot(double* s, const double* r, const double* w,
                               std::size_t n) {
  __m256d a0 = _mm256_setzero_pd(), a1 = a0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d s0 = _mm256_mul_pd(_mm256_loadu_pd(s + i), _mm256_loadu_pd(r + i));
    __m256d s1 = _mm256_mul_pd(_mm256_loadu_pd(s + i + 4), _mm256_loadu_pd(r + i + 4));
    _mm256_storeu_pd(s + i, s0);
    _mm256_storeu_pd(s + i + 4, s1);
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), s0, a0);
    a1 = _mm256_fmadd_pd(_mm256_loadu_pd(w + i + 4), s1, a1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d s0 = _mm256_mul_pd(_mm256_loadu_pd(s + i), _mm256_loadu_pd(r + i));
    _mm256_storeu_pd(s + i, s0);
    a0 = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), s0, a0);
  }
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) {
    s[i] *= r[i];
    acc += w[i] * s[i];
  }
  return acc;
}

}  // namespace sgdcurve::kernels::avx2

#endif
