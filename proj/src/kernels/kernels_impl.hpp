#pragma once

#include <cstddef>

namespace sgdcurve::kernels::scalar {

double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
double weighted_sumsq(const double* w, const double* x, std::size_t n);
double diag_rank1_step(double* c, const double* a, const double* lambda,
                       double beta, std::size_t n);
double decay_dot(double* s, const double* r, const double* w, std::size_t n);

}  // namespace sgdcurve::kernels::scalar

#if defined(__x86_64__) || defined(_M_X64)
#define SGDCURVE_HAVE_AVX2_KERNELS 1

namespace sgdcurve::kernels::avx2 {

double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
double weighted_sumsq(const double* w, const double* x, std::size_t n);
double diag_rank1_step(double* c, const double* a, const double* lambda,
                       double beta, std::size_t n);
double decay_dot(double* s, const double* r, const double* w, std::size_t n);

}  // namespace sgdcurve::kernels::avx2
#endif
