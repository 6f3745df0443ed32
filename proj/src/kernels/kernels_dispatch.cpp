#include "lgplug/kernels.hpp"

#include <cstdlib>

#include "lgplug/errors.hpp"

namespace lgplug::kern {

double (*dot)(const double*, const double*, std::size_t) = ref::dot;
double (*l2sqr)(const double*, const double*, std::size_t) = ref::l2sqr;
double (*nrm2sqr)(const double*, std::size_t) = ref::nrm2sqr;
double (*sum)(const double*, std::size_t) = ref::sum;
double (*max)(const double*, std::size_t) = ref::max;
void (*axpy)(double, const double*, double*, std::size_t) = ref::axpy;
void (*scale)(double, double*, std::size_t) = ref::scale;
void (*add)(const double*, double*, std::size_t) = ref::add;

namespace {
std::string g_isa = "ref";
}

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

void force_isa(const std::string& name) {
  if (name == "ref") {
    dot = ref::dot;
    l2sqr = ref::l2sqr;
    nrm2sqr = ref::nrm2sqr;
    sum = ref::sum;
    max = ref::max;
    axpy = ref::axpy;
    scale = ref::scale;
    add = ref::add;
    g_isa = "ref";
    return;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (name == "avx2") {
    if (!cpu_has_avx2()) throw ConfigError("kernels: this CPU does not support avx2+fma");
    dot = avx2::dot;
    l2sqr = avx2::l2sqr;
    nrm2sqr = avx2::nrm2sqr;
    sum = avx2::sum;
    max = avx2::max;
    axpy = avx2::axpy;
    scale = avx2::scale;
    add = avx2::add;
    g_isa = "avx2";
    return;
  }
#endif
#if defined(__aarch64__)
  if (name == "neon") {
    dot = neon::dot;
    l2sqr = neon::l2sqr;
    nrm2sqr = neon::nrm2sqr;
    sum = neon::sum;
    max = neon::max;
    axpy = neon::axpy;
    scale = neon::scale;
    add = neon::add;
    g_isa = "neon";
    return;
  }
#endif
  throw ConfigError("kernels: unknown or unsupported isa '" + name + "'");
}

const std::string& active_isa() { return g_isa; }

namespace {

// Bind the widest supported path before main() runs; LGPLUG_ISA overrides
// (useful for comparing the paths on one machine).
struct DispatchInit {
  DispatchInit() {
#if defined(__x86_64__) || defined(_M_X64)
    if (cpu_has_avx2()) force_isa("avx2");
#elif defined(__aarch64__)
    force_isa("neon");
#endif
    if (const char* wanted = std::getenv("LGPLUG_ISA"); wanted && *wanted) {
      force_isa(wanted);
    }
  }
};
const DispatchInit g_init;

}  // namespace

}  // namespace lgplug::kern
