// SPDX-License-Identifier: Apache-2.0
/**
 * @file kernels.hpp
 * @brief Inner-loop arithmetic used by the dense and convolution layers.
 *
 * Every kernel has a portable scalar reference in `kernels::scalar` and, on
 * x86-64, an AVX2 variant in `kernels::avx2`. `active()` picks one table at
 * first use: AVX2 when the CPU reports it, scalar otherwise. Setting the
 * environment variable GESTURE_KERNELS=scalar forces the reference path.
 *
 * `axpy` is bit-identical across backends (one multiply and one add per
 * element, no fusion). `dot` reorders the summation in the vector variant,
 * so backends agree to rounding only; within one process the choice is fixed
 * and results stay deterministic.
 */
#pragma once

#include <cstddef>
#include <string_view>

namespace gesture::kernels {

enum class Backend { scalar, avx2 };

struct KernelTable {
  Backend backend;
  /// sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
};

namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
}  // namespace avx2

bool supported(Backend b);
const KernelTable& table(Backend b);
const KernelTable& active();
/// Overrides the dispatch choice; throws ContractViolation if unsupported.
void force_backend(Backend b);
std::string_view name(Backend b);

}  // namespace gesture::kernels
