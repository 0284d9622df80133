#pragma once

// Arithmetic inner loops shared by the theory propagators and the SGD
// simulator. Every kernel has a scalar reference implementation and, on
// x86-64, an AVX2+FMA variant. The variant is picked once at startup from
// the CPU features; SGDCURVE_ISA=scalar|avx2 overrides the choice.
//
// Reductions use a fixed lane layout and a fixed combine order, so repeated
// calls with the same inputs and the same table return identical bits. The
// scalar and AVX2 tables agree to rounding, not bit-for-bit.

#include <cstddef>
#include <span>
#include <string_view>

namespace sgdcurve::kernels {

struct Table {
  const char* name;

  // sum_i x_i y_i
  double (*dot)(const double* x, const double* y, std::size_t n);

  // y_i += a x_i
  void (*axpy)(double a, const double* x, double* y, std::size_t n);

  // out_i = a_i b_i
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);

  // sum_i w_i x_i^2
  double (*weighted_sumsq)(const double* w, const double* x, std::size_t n);

  // c_i = a_i c_i + beta lambda_i, then returns sum_i lambda_i c_i (new c).
  // One step of a diagonal-plus-rank-one linear recursion.
  double (*diag_rank1_step)(double* c, const double* a, const double* lambda,
                            double beta, std::size_t n);

  // s_i *= r_i, then returns sum_i w_i s_i (new s).
  double (*decay_dot)(double* s, const double* r, const double* w,
                      std::size_t n);
};

const Table& scalar_table();

// nullptr when the running CPU lacks AVX2/FMA or the build is not x86-64.
const Table* avx2_table();

// The table used by the library. Resolved on first use.
const Table& active();

// Forces a table by name ("scalar", "avx2" or "auto"). Returns false and
// leaves the selection unchanged if the name is unknown or unsupported.
bool select(std::string_view name);

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}

inline double weighted_sumsq(std::span<const double> w,
                             std::span<const double> x) {
  return active().weighted_sumsq(w.data(), x.data(), x.size());
}

}  // namespace sgdcurve::kernels
