#include "sgdcurve/powerlaw.hpp"

#include <cmath>
#include <string>

#include "sgdcurve/errors.hpp"
#include "sgdcurve/gaussian_theory.hpp"

namespace sgdcurve {
namespace {

FitResult loglog_fit(std::span<const double> y, std::int64_t first_x,
                     std::int64_t lo, std::int64_t hi) {
  if (hi - lo + 1 < 3) throw InputError("power-law fit needs at least 3 points");
  // Two passes: means first, then centred sums.
  const double count = static_cast<double>(hi - lo + 1);
  double mx = 0.0, my = 0.0;
  for (std::int64_t k = lo; k <= hi; ++k) {
    const double v = y[static_cast<std::size_t>(k - first_x)];
    if (!(v > 0.0)) {
      throw InputError("power-law fit: non-positive value at index " + std::to_string(k));
    }
    mx += std::log(static_cast<double>(k));
    my += std::log(v);
  }
  mx /= count;
  my /= count;
  double sxx = 0.0, sxy = 0.0;
  for (std::int64_t k = lo; k <= hi; ++k) {
    const double dx = std::log(static_cast<double>(k)) - mx;
    const double dy = std::log(y[static_cast<std::size_t>(k - first_x)]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
  }
  const double slope = sxy / sxx;
  FitResult r;
  r.exponent = -slope;
  r.intercept = my - slope * mx;
  r.k_min = lo;
  r.k_max = hi;
  double ss = 0.0;
  for (std::int64_t k = lo; k <= hi; ++k) {
    const double pred = r.intercept + slope * std::log(static_cast<double>(k));
    const double d = std::log(y[static_cast<std::size_t>(k - first_x)]) - pred;
    ss += d * d;
  }
  r.residual = std::sqrt(ss / count);
  return r;
}

}  // namespace

Spectrum powerlaw_spectrum(const PowerLawParams& p) {
  if (p.n_modes < 1) throw InputError("power law needs at least one mode");
  if (!std::isfinite(p.a) || !std::isfinite(p.b)) {
    throw InputError("power-law exponents must be finite");
  }
  std::vector<double> lambda(static_cast<std::size_t>(p.n_modes));
  std::vector<double> v2(lambda.size());
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    const double k = static_cast<double>(i + 1);
    lambda[i] = std::pow(k, -p.b);
    v2[i] = std::pow(k, -(p.a - p.b));
  }
  return validate_spectrum(std::move(lambda), std::move(v2), 0.0);
}

double predicted_exponent(const PowerLawParams& p) {
  if (!(p.a > 1.0)) {
    throw InputError("task exponent a must be > 1 (otherwise the target power diverges)");
  }
  if (!(p.b > 0.0)) throw InputError("feature exponent b must be > 0");
  return (p.a - 1.0) / p.b;
}

double dominant_mode(const PowerLawParams& p, double eta, double t) {
  predicted_exponent(p);
  return std::pow(2.0 * p.b * eta * t / p.a, 1.0 / p.b);
}

FitResult fit_powerlaw(std::span<const double> series, std::int64_t k_min,
                       std::int64_t k_max) {
  if (k_min < 1 || k_max > static_cast<std::int64_t>(series.size()) || k_min > k_max) {
    throw InputError("fit window [" + std::to_string(k_min) + ", " +
                     std::to_string(k_max) + "] outside series of length " +
                     std::to_string(series.size()));
  }
  return loglog_fit(series, 1, k_min, k_max);
}

FitResult fit_curve(const LearningCurve& curve, std::int64_t t_lo,
                    std::int64_t t_hi) {
  if (t_lo < 1 || t_hi > static_cast<std::int64_t>(curve.steps()) || t_lo > t_hi) {
    throw InputError("fit window [" + std::to_string(t_lo) + ", " +
                     std::to_string(t_hi) + "] outside curve of " +
                     std::to_string(curve.steps()) + " steps");
  }
  return loglog_fit(curve.losses, 0, t_lo, t_hi);
}

std::vector<double> tail_sum(const Spectrum& spec) {
  const auto lambda = spec.lambda();
  const auto v2 = spec.v2();
  std::vector<double> out(lambda.size());
  double acc = 0.0;
  for (std::size_t i = lambda.size(); i-- > 0;) {
    acc += lambda[i] * v2[i];
    out[i] = acc;
  }
  return out;
}

ScalingReport scaling_check(const PowerLawParams& p, double eta, std::int64_t m,
                            std::int64_t t_lo, std::int64_t t_hi) {
  ScalingReport rep;
  rep.beta_predicted = predicted_exponent(p);
  if (!(eta > 0.0)) throw InputError("learning rate must be > 0");
  if (m < 1) throw InputError("batch size must be >= 1");
  if (t_lo < 1 || t_hi <= t_lo) throw InputError("invalid time window");
  const Spectrum spec = powerlaw_spectrum(p);
  const double fluctuation = eta * eta * spec.lambda_norm2() / static_cast<double>(m);
  rep.regime_ok = fluctuation < 0.01 * 2.0 * eta * spec.lambda_max();
  const LearningCurve curve = propagate(spec, {eta, m, t_hi});
  if (curve.diverged) throw UnstableError("theory curve diverged; no scaling regime");
  rep.fit = fit_curve(curve, t_lo, t_hi);
  rep.beta_fit = rep.fit.exponent;
  rep.relative_gap = std::abs(rep.beta_fit - rep.beta_predicted) / rep.beta_predicted;
  return rep;
}

}  // namespace sgdcurve
