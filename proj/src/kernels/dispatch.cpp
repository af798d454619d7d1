// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "gesture/error.hpp"
#include "gesture/kernels.hpp"

namespace gesture::kernels {

namespace {

constexpr KernelTable kScalar{Backend::scalar, &scalar::dot, &scalar::axpy};
#ifdef GESTURE_HAVE_AVX2
constexpr KernelTable kAvx2{Backend::avx2, &avx2::dot, &avx2::axpy};
#endif

const KernelTable* detect() {
  if (const char* env = std::getenv("GESTURE_KERNELS"); env && std::string(env) == "scalar")
    return &kScalar;
#ifdef GESTURE_HAVE_AVX2
  if (__builtin_cpu_supports("avx2")) return &kAvx2;
#endif
  return &kScalar;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{detect()};
  return current;
}

}  // namespace

#ifndef GESTURE_HAVE_AVX2
namespace avx2 {
// Non-x86 builds route the avx2 names to the reference so the symbols exist.
double dot(const double* x, const double* y, std::size_t n) { return scalar::dot(x, y, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { scalar::axpy(a, x, y, n); }
}  // namespace avx2
#endif

bool supported(Backend b) {
  if (b == Backend::scalar) return true;
#ifdef GESTURE_HAVE_AVX2
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable& table(Backend b) {
  if (!supported(b)) throw ContractViolation("kernel backend not supported: " + std::string(name(b)));
#ifdef GESTURE_HAVE_AVX2
  if (b == Backend::avx2) return kAvx2;
#endif
  return kScalar;
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void force_backend(Backend b) { slot().store(&table(b), std::memory_order_release); }

std::string_view name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

}  // namespace gesture::kernels
