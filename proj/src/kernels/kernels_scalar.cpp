#include "kernels_impl.hpp"

namespace sgdcurve::kernels::scalar {

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

double weighted_sumsq(const double* w, const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += w[i] * x[i] * x[i];
  return acc;
}

double diag_rank1_step(double* c, const double* a, const double* lambda,
                       double beta, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = a[i] * c[i] + beta * lambda[i];
    acc += lambda[i] * c[i];
  }
  return acc;
}

double decay_dot(double* s, const double* r, const double* w, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] *= r[i];
    acc += w[i] * s[i];
  }
  return acc;
}

}  // namespace sgdcurve::kernels::scalar
