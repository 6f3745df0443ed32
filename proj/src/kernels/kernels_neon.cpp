// NEON variants for aarch64, where 128-bit SIMD is baseline. Same contract
// as the AVX2 file: reductions use 2-lane accumulators, equivalence with the
// scalar reference is bounded by the tests.

#include "lgplug/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace lgplug::kern::neon {

double dot(const double* x, const double* y, std::size_t n) {
  const std::size_t body = n - n % 2;
  float64x2_t acc = vdupq_n_f64(0.0);
  for (std::size_t i = 0; i < body; i += 2) {
    acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
  }
  double r = vaddvq_f64(acc);
  for (std::size_t i = body; i < n; ++i) r += x[i] * y[i];
  return r;
}

double l2sqr(const double* x, const double* y, std::size_t n) {
  const std::size_t body = n - n % 2;
  float64x2_t acc = vdupq_n_f64(0.0);
  for (std::size_t i = 0; i < body; i += 2) {
    float64x2_t d = vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i));
    acc = vfmaq_f64(acc, d, d);
  }
  double r = vaddvq_f64(acc);
  for (std::size_t i = body; i < n; ++i) {
    const double d = x[i] - y[i];
    r += d * d;
  }
  return r;
}

double nrm2sqr(const double* x, std::size_t n) {
  const std::size_t body = n - n % 2;
  float64x2_t acc = vdupq_n_f64(0.0);
  for (std::size_t i = 0; i < body; i += 2) {
    float64x2_t v = vld1q_f64(x + i);
    acc = vfmaq_f64(acc, v, v);
  }
  double r = vaddvq_f64(acc);
  for (std::size_t i = body; i < n; ++i) r += x[i] * x[i];
  return r;
}

double sum(const double* x, std::size_t n) {
  const std::size_t body = n - n % 2;
  float64x2_t acc = vdupq_n_f64(0.0);
  for (std::size_t i = 0; i < body; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double r = vaddvq_f64(acc);
  for (std::size_t i = body; i < n; ++i) r += x[i];
  return r;
}

double max(const double* x, std::size_t n) {
  if (n < 4) return ref::max(x, n);
  const std::size_t body = n - n % 2;
  float64x2_t acc = vld1q_f64(x);
  for (std::size_t i = 2; i < body; i += 2) acc = vmaxq_f64(acc, vld1q_f64(x + i));
  double m = vmaxvq_f64(acc);
  for (std::size_t i = body; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const std::size_t body = n - n % 2;
  const float64x2_t va = vdupq_n_f64(a);
  for (std::size_t i = 0; i < body; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (std::size_t i = body; i < n; ++i) y[i] += a * x[i];
}

void scale(double a, double* x, std::size_t n) {
  const std::size_t body = n - n % 2;
  const float64x2_t va = vdupq_n_f64(a);
  for (std::size_t i = 0; i < body; i += 2) {
    vst1q_f64(x + i, vmulq_f64(va, vld1q_f64(x + i)));
  }
  for (std::size_t i = body; i < n; ++i) x[i] *= a;
}

void add(const double* x, double* y, std::size_t n) {
  const std::size_t body = n - n % 2;
  for (std::size_t i = 0; i < body; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  }
  for (std::size_t i = body; i < n; ++i) y[i] += x[i];
}

}  // namespace lgplug::kern::neon

#endif  // aarch64
