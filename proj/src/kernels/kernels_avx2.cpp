// AVX2+FMA variants. Compiled with -mavx2 -mfma for this translation unit
// only; callers reach them through the dispatch table after the runtime
// CPU check. Horizontal reductions use 4-lane accumulators, so results may
// differ from the scalar path in the last bits; the equivalence tests bound
// that difference.

#include "lgplug/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace lgplug::kern::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, shuf));
}

}  // namespace

double dot(const double* x, const double* y, std::size_t n) {
  const std::size_t tail = n % 4;
  const std::size_t body = n - tail;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < body; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  }
  double r = hsum(acc);
  for (std::size_t i = body; i < n; ++i) r += x[i] * y[i];
  return r;
}

double l2sqr(const double* x, const double* y, std::size_t n) {
  const std::size_t tail = n % 4;
  const std::size_t body = n - tail;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < body; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double r = hsum(acc);
  for (std::size_t i = body; i < n; ++i) {
    const double d = x[i] - y[i];
    r += d * d;
  }
  return r;
}

double nrm2sqr(const double* x, std::size_t n) {
  const std::size_t tail = n % 4;
  const std::size_t body = n - tail;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < body; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double r = hsum(acc);
  for (std::size_t i = body; i < n; ++i) r += x[i] * x[i];
  return r;
}

double sum(const double* x, std::size_t n) {
  const std::size_t tail = n % 4;
  const std::size_t body = n - tail;
  __m256d acc = _mm256_setzero_pd();
  for (std::size_t i = 0; i < body; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  }
  double r = hsum(acc);
  for (std::size_t i = body; i < n; ++i) r += x[i];
  return r;
}

double max(const double* x, std::size_t n) {
  if (n < 8) return ref::max(x, n);
  const std::size_t tail = n % 4;
  const std::size_t body = n - tail;
  __m256d acc = _mm256_loadu_pd(x);
  for (std::size_t i = 4; i < body; i += 4) {
    acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
  }
  double m = hmax(acc);
  for (std::size_t i = body; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const std::size_t tail = n % 4;
  const std::size_t body = n - tail;
  const __m256d va = _mm256_set1_pd(a);
  for (std::size_t i = 0; i < body; i += 4) {
    __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, r);
  }
  for (std::size_t i = body; i < n; ++i) y[i] += a * x[i];
}

void scale(double a, double* x, std::size_t n) {
  const std::size_t tail = n % 4;
  const std::size_t body = n - tail;
  const __m256d va = _mm256_set1_pd(a);
  for (std::size_t i = 0; i < body; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (std::size_t i = body; i < n; ++i) x[i] *= a;
}

void add(const double* x, double* y, std::size_t n) {
  const std::size_t tail = n % 4;
  const std::size_t body = n - tail;
  for (std::size_t i = 0; i < body; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (std::size_t i = body; i < n; ++i) y[i] += x[i];
}

}  // namespace lgplug::kern::avx2

#endif  // x86_64
