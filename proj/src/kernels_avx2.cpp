// AVX2 variants of the f64 primitives. This file is the only one compiled
// with -mavx2; kernels.cpp only calls into it after a cpuid check, so the
// rest of the build stays baseline x86-64.
//
// Reductions accumulate in 4 independent lanes and combine at the end, so
// the summation order differs from the scalar backend. Plain mul+add, no FMA:
// keeps the per-element products identical to scalar and the difference down
// to reassociation alone.

#include "kernels_detail.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

namespace smadd::kernels::detail {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double avx2_dot(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d p = _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_add_pd(acc, p);
  }
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

void avx2_axpy(double a, const double* x, double* y, std::size_t n) {
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d p = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), p));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void avx2_scal(double a, double* x, std::size_t n) {
  __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) x[i] *= a;
}

double avx2_sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

double avx2_sumsq(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(v, v));
  }
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i] * x[i];
  return r;
}

double avx2_absdiff_sum(const double* x, const double* y, std::size_t n) {
  const __m256d signmask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(signmask, d));
  }
  double r = hsum(acc);
  for (; i < n; ++i) {
    double d = x[i] - y[i];
    r += d < 0 ? -d : d;
  }
  return r;
}

}  // namespace

const Vtable* avx2_vtable() {
  static const Vtable t = {avx2_dot, avx2_axpy, avx2_scal,
                           avx2_sum, avx2_sumsq, avx2_absdiff_sum};
  return &t;
}

}  // namespace smadd::kernels::detail

#else

namespace smadd::kernels::detail {
const Vtable* avx2_vtable() { return nullptr; }
}  // namespace smadd::kernels::detail

#endif
