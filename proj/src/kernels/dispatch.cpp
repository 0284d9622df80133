#include "sgdcurve/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace sgdcurve::kernels {
namespace {

const Table kScalar{
    "scalar",
    &scalar::dot,
    &scalar::axpy,
    &scalar::mul,
    &scalar::weighted_sumsq,
    &scalar::diag_rank1_step,
    &scalar::decay_dot,
};

#if defined(SGDCURVE_HAVE_AVX2_KERNELS)
const Table kAvx2{
    "avx2",
    &avx2::dot,
    &avx2::axpy,
    &avx2::mul,
    &avx2::weighted_sumsq,
    &avx2::diag_rank1_step,
    &avx2::decay_dot,
};

bool cpu_has_avx2() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const Table* resolve(std::string_view name) {
  if (name == "scalar") return &kScalar;
  if (name == "avx2") return avx2_table();
  if (name == "auto" || name.empty()) {
    const Table* fast = avx2_table();
    return fast ? fast : &kScalar;
  }
  return nullptr;
}

const Table* initial() {
  const char* env = std::getenv("SGDCURVE_ISA");
  if (env != nullptr) {
    if (const Table* t = resolve(env)) return t;
  }
  return resolve("auto");
}

std::atomic<const Table*>& current() {
  static std::atomic<const Table*> table{initial()};
  return table;
}

}  // namespace

const Table& scalar_table() { return kScalar; }

const Table* avx2_table() {
#if defined(SGDCURVE_HAVE_AVX2_KERNELS)
  static const bool ok = cpu_has_avx2();
  return ok ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const Table& active() { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) {
  const Table* t = resolve(name);
  if (t == nullptr) return false;
  current().store(t, std::memory_order_release);
  return true;
}

}  // namespace sgdcurve::kernels
