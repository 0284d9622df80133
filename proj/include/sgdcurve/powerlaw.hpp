#pragma once

// Power-law spectra lambda_k = k^-b with task power lambda_k v_k^2 = k^-a, the
// predicted loss exponent beta = (a - 1)/b, and log-log least-squares fits.

#include <cstdint>
#include <span>
#include <vector>

#include "sgdcurve/curve.hpp"
#include "sgdcurve/spectral.hpp"

namespace sgdcurve {

struct PowerLawParams {
  double a = 2.0;
  double b = 1.0;
  std::int64_t n_modes = 1000;
};

// lambda_k = k^-b, v2_k = k^-(a-b), sigma2 = 0 for k = 1..n_modes.
Spectrum powerlaw_spectrum(const PowerLawParams& p);

// (a - 1)/b. Throws InputError when a <= 1 or b <= 0.
double predicted_exponent(const PowerLawParams& p);

// Index of the mode that dominates the loss at step t: (2 b eta t / a)^(1/b).
double dominant_mode(const PowerLawParams& p, double eta, double t);

struct FitResult {
  double exponent = 0.0;   // negated slope of log y against log x
  double intercept = 0.0;  // log y at log x = 0
  std::int64_t k_min = 0;
  std::int64_t k_max = 0;
  double residual = 0.0;   // RMS of the log-space residuals
};

// Ordinary least squares of log(series[k-1]) on log(k) for k in [k_min, k_max]
// (1-based, inclusive). Needs at least 3 points, all > 0.
FitResult fit_powerlaw(std::span<const double> series, std::int64_t k_min,
                       std::int64_t k_max);

// Same fit on a learning curve indexed by t, with t = losses index, over
// t in [t_lo, t_hi]. t_lo must be >= 1.
FitResult fit_curve(const LearningCurve& curve, std::int64_t t_lo,
                    std::int64_t t_hi);

// T_k = sum_{n >= k} lambda_n v2_n, by reverse cumulative summation.
std::vector<double> tail_sum(const Spectrum& spec);

struct ScalingReport {
  double beta_fit = 0.0;
  double beta_predicted = 0.0;
  double relative_gap = 0.0;  // |fit - predicted| / predicted
  bool regime_ok = true;      // eta^2 |lambda|^2 / m < 0.01 * 2 eta lambda_1
  FitResult fit;
};

// Runs the Gaussian theory on powerlaw_spectrum(p) for t_hi steps and fits the
// loss over [t_lo, t_hi]. Outside the small-fluctuation regime the report is
// still produced with regime_ok = false.
ScalingReport scaling_check(const PowerLawParams& p, double eta, std::int64_t m,
                            std::int64_t t_lo, std::int64_t t_hi);

}  // namespace sgdcurve
