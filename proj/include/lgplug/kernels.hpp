#pragma once

#include <cstddef>
#include <string>

// Dense double-precision inner loops used by everything numeric in the
// project: matrix products, row normalization, k-means distances, softmax
// and log-sum-exp reductions, Adam updates.
//
// Layout follows the usual ref+SIMD split: `ref` holds the scalar reference
// kernels (always compiled, ground truth for tests), `avx2`/`neon` hold the
// vectorized variants, and the dispatched function pointers below are bound
// once at startup to the widest instruction set the running CPU supports.
// Tests assert bit-level-close equivalence between the paths.

namespace lgplug::kern {

namespace ref {

double dot(const double* x, const double* y, std::size_t n);
double l2sqr(const double* x, const double* y, std::size_t n);
double nrm2sqr(const double* x, std::size_t n);
double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);  // n >= 1
void axpy(double a, const double* x, double* y, std::size_t n);  // y += a*x
void scale(double a, double* x, std::size_t n);
void add(const double* x, double* y, std::size_t n);  // y += x

}  // namespace ref

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {

double dot(const double* x, const double* y, std::size_t n);
double l2sqr(const double* x, const double* y, std::size_t n);
double nrm2sqr(const double* x, std::size_t n);
double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, double* x, std::size_t n);
void add(const double* x, double* y, std::size_t n);

}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {

double dot(const double* x, const double* y, std::size_t n);
double l2sqr(const double* x, const double* y, std::size_t n);
double nrm2sqr(const double* x, std::size_t n);
double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, double* x, std::size_t n);
void add(const double* x, double* y, std::size_t n);

}  // namespace neon
#endif

extern double (*dot)(const double*, const double*, std::size_t);
extern double (*l2sqr)(const double*, const double*, std::size_t);
extern double (*nrm2sqr)(const double*, std::size_t);
extern double (*sum)(const double*, std::size_t);
extern double (*max)(const double*, std::size_t);
extern void (*axpy)(double, const double*, double*, std::size_t);
extern void (*scale)(double, double*, std::size_t);
extern void (*add)(const double*, double*, std::size_t);

// Name of the instruction set currently bound: "ref", "avx2" or "neon".
const std::string& active_isa();

// Rebind the dispatch table. Accepts "ref" always, "avx2"/"neon" when both
// compiled in and supported by the CPU. Throws ConfigError otherwise.
// Intended for tests and the CLI's --isa override.
void force_isa(const std::string& name);

bool cpu_has_avx2();

}  // namespace lgplug::kern
