#include "sgdcurve/gaussian_theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sgdcurve/errors.hpp"
#include "sgdcurve/kernels.hpp"

namespace sgdcurve {
namespace {

void check_divergence(LearningCurve& curve, double loss) {
  const double l0 = curve.losses.front();
  if (!std::isfinite(loss) || (l0 > 0.0 && loss > kDivergenceFactor * l0)) {
    curve.diverged = true;
  }
}

std::vector<double> diagonal_factors(std::span<const double> lambda, double eta,
                                     double fluct) {
  std::vector<double> a(lambda.size());
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    const double g = 1.0 - eta * lambda[k];
    a[k] = g * g + fluct * lambda[k] * lambda[k];
  }
  return a;
}

// c_{t+1} = diag(a) c_t + (fluct lambda.c_t + bias) lambda; L_t = offset + lambda.c_t
LearningCurve diag_rank1_recursion(std::span<const double> lambda,
                                   std::vector<double> c,
                                   std::span<const double> a, double fluct,
                                   double bias, double offset,
                                   std::int64_t steps) {
  const auto& k = kernels::active();
  const std::size_t n = lambda.size();
  LearningCurve curve;
  curve.losses.resize(static_cast<std::size_t>(steps) + 1);
  double s = k.dot(lambda.data(), c.data(), n);
  curve.losses[0] = offset + s;
  for (std::int64_t t = 1; t <= steps; ++t) {
    const double beta = fluct * s + bias;
    s = k.diag_rank1_step(c.data(), a.data(), lambda.data(), beta, n);
    const double loss = offset + s;
    curve.losses[static_cast<std::size_t>(t)] = loss;
    if (!curve.diverged) check_divergence(curve, loss);
  }
  return curve;
}

double batch_as_real(std::int64_t m) { return static_cast<double>(m); }

struct Normalized {
  double lambda_max;
  double norm2;  // |lambda / lambda_max|^2
};

Normalized normalize(std::span<const double> lambda) {
  if (lambda.empty()) throw InputError("empty spectrum");
  const double top = *std::max_element(lambda.begin(), lambda.end());
  if (!(top > 0.0)) throw InputError("spectrum has no positive eigenvalue");
  double n2 = 0.0;
  for (double l : lambda) {
    const double r = l / top;
    n2 += r * r;
  }
  return {top, n2};
}

double golden_section(auto&& f, double lo, double hi, int iterations) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iterations && hi - lo > 1e-13 * hi; ++i) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? x1 : x2;
}

}  // namespace

LearningCurve propagate_with_fluctuation(const Spectrum& spec, double eta,
                                         double fluct, std::int64_t steps) {
  if (steps < 0) throw InputError("step count must be >= 0");
  if (!(fluct >= 0.0)) throw InputError("fluctuation scale must be >= 0");
  const auto lambda = spec.lambda();
  const std::vector<double> a = diagonal_factors(lambda, eta, fluct);
  std::vector<double> c(spec.v2().begin(), spec.v2().end());
  // Label noise enters the gradient covariance as (sigma^2 / m) Sigma; fluct
  // carries eta^2 / m, so the per-step injection is fluct * sigma^2 * lambda.
  const double bias = fluct * spec.sigma2();
  return diag_rank1_recursion(lambda, std::move(c), a, fluct, bias,
                              spec.sigma2(), steps);
}

LearningCurve propagate(const Spectrum& spec, const HyperParams& hp) {
  hp.validate();
  if (spec.sigma2() != 0.0) {
    throw InputError("propagate requires sigma2 == 0; use propagate_noisy");
  }
  return propagate_noisy(spec, hp);
}

LearningCurve propagate_noisy(const Spectrum& spec, const HyperParams& hp) {
  hp.validate();
  const double fluct = hp.eta * hp.eta / batch_as_real(hp.batch);
  return propagate_with_fluctuation(spec, hp.eta, fluct, hp.steps);
}

bool is_stable(const Spectrum& spec, double eta, double batch) {
  const double fluct = eta * eta / batch;
  const auto lambda = spec.lambda();
  double u = 0.0;
  for (double l : lambda) {
    if (l == 0.0) continue;  // decoupled and invisible in the loss
    const double g = 1.0 - eta * l;
    const double pivot = 1.0 - (g * g + fluct * l * l);
    if (!(pivot > 1e-14)) return false;
    u += l * l / pivot;
  }
  return fluct * u < 1.0;
}

double asymptotic_loss(const Spectrum& spec, const HyperParams& hp) {
  hp.validate();
  const double m = batch_as_real(hp.batch);
  const double fluct = hp.eta * hp.eta / m;
  double u = 0.0;
  for (double l : spec.lambda()) {
    if (l == 0.0) continue;
    const double g = 1.0 - hp.eta * l;
    const double pivot = 1.0 - (g * g + fluct * l * l);
    if (!(pivot > 1e-14)) {
      throw UnstableError("unstable: diagonal pivot " + std::to_string(pivot) +
                          " of I - A is not positive");
    }
    u += l * l / pivot;
  }
  const double denom = 1.0 - fluct * u;
  if (!(denom > 0.0)) {
    throw UnstableError("unstable: rank-one correction makes I - A singular");
  }
  const double s2 = spec.sigma2();
  return s2 + fluct * s2 * (u / denom);
}

double relaxation_time(const Spectrum& spec, const HyperParams& hp) {
  // Perron root of diag(d) + fluct lambda lambda': the largest rho > max d_k
  // with fluct sum_k lambda_k^2 / (rho - d_k) = 1, found by bisection.
  const double fluct = hp.eta * hp.eta / batch_as_real(hp.batch);
  std::vector<double> d, l2;
  double top = 0.0, mass = 0.0;
  for (double l : spec.lambda()) {
    if (l == 0.0) continue;
    const double g = 1.0 - hp.eta * l;
    d.push_back(g * g + fluct * l * l);
    l2.push_back(l * l);
    top = std::max(top, d.back());
    mass += l * l;
  }
  double lo = top, hi = top + fluct * mass;
  if (fluct > 0.0) {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (!(mid > lo && mid < hi)) break;
      double h = 0.0;
      for (std::size_t k = 0; k < d.size(); ++k) h += l2[k] / (mid - d[k]);
      (fluct * h > 1.0 ? lo : hi) = mid;
    }
  }
  const double rho = hi;
  if (rho >= 1.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (1.0 - rho);
}

LearningCurve population_curve(const Spectrum& spec, double eta,
                               std::int64_t steps) {
  if (steps < 0) throw InputError("step count must be >= 0");
  const auto lambda = spec.lambda();
  const std::size_t n = lambda.size();
  std::vector<double> ratio(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double g = 1.0 - eta * lambda[k];
    ratio[k] = g * g;
  }
  std::vector<double> c(spec.v2().begin(), spec.v2().end());
  const auto& kt = kernels::active();
  LearningCurve curve;
  curve.losses.resize(static_cast<std::size_t>(steps) + 1);
  curve.losses[0] = spec.sigma2() + kt.dot(lambda.data(), c.data(), n);
  for (std::int64_t t = 1; t <= steps; ++t) {
    const double loss =
        spec.sigma2() + kt.decay_dot(c.data(), ratio.data(), lambda.data(), n);
    curve.losses[static_cast<std::size_t>(t)] = loss;
    if (!curve.diverged) check_divergence(curve, loss);
  }
  return curve;
}

double stability_min_batch(double eta, std::span<const double> lambda) {
  const Normalized nz = normalize(lambda);
  const double e = eta * nz.lambda_max;
  if (!(e > 0.0)) throw InputError("learning rate must be > 0");
  if (e >= 2.0) {
    throw InputError("eta * lambda_max >= 2 is always unstable");
  }
  return e * nz.norm2 / (2.0 - e);
}

double stability_max_eta(double batch, std::span<const double> lambda) {
  const Normalized nz = normalize(lambda);
  if (!(batch > 0.0)) throw InputError("batch size must be > 0");
  return 2.0 * batch / (batch + nz.norm2) / nz.lambda_max;
}

LearningCurve loss_lower_bound(const Spectrum& spec, const HyperParams& hp) {
  hp.validate();
  if (spec.sigma2() != 0.0) throw InputError("lower bound requires sigma2 == 0");
  const Normalized nz = normalize(spec.lambda());
  const double e = hp.eta * nz.lambda_max;
  const double g = 1.0 - e;
  const double rate = g * g + e * e * nz.norm2 / batch_as_real(hp.batch);
  const double l0 = spec.signal_power();
  LearningCurve curve;
  curve.losses.resize(static_cast<std::size_t>(hp.steps) + 1);
  curve.losses[0] = l0;
  for (std::int64_t t = 1; t <= hp.steps; ++t) {
    curve.losses[static_cast<std::size_t>(t)] =
        l0 * std::pow(rate, static_cast<double>(t));
  }
  return curve;
}

OptimalBatch heuristic_optimal_batch(double eta, std::span<const double> lambda) {
  const Normalized nz = normalize(lambda);
  const double e = eta * nz.lambda_max;
  if (!(e > 0.0) || e >= 2.0) {
    throw InputError("heuristic batch needs 0 < eta * lambda_max < 2");
  }
  const double a = (1.0 - e) * (1.0 - e);
  auto f = [a](double z) { return z + z * std::log(z) - a; };

  // f is increasing on (1/e, 1) with f(1/e) = -a <= 0 < 1 - a = f(1).
  double lo = std::exp(-1.0), hi = 1.0;
  double z = lo;
  if (std::abs(f(lo)) >= 1e-12) {
    for (int i = 0; i < 200; ++i) {
      z = 0.5 * (lo + hi);
      const double fz = f(z);
      if (fz == 0.0 || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon()) break;
      (fz < 0.0 ? lo : hi) = z;
    }
  }
  OptimalBatch out;
  out.z = z;
  out.m_star = e * e * nz.norm2 / (z - a);
  out.m_star_int = std::max<std::int64_t>(1, std::llround(out.m_star));
  return out;
}

double heuristic_optimal_eta(std::int64_t batch, std::span<const double> lambda) {
  if (batch < 1) throw InputError("batch size must be >= 1");
  const Normalized nz = normalize(lambda);
  const double m = batch_as_real(batch);
  return m / (m + nz.norm2) / nz.lambda_max;
}

LearningCurve isotropic_curve(std::int64_t n, const HyperParams& hp,
                              double w_norm2, bool use_optimal_eta) {
  if (n < 1) throw InputError("isotropic dimension must be >= 1");
  if (hp.batch < 1 || hp.steps < 0) throw InputError("invalid hyperparameters");
  const double m = batch_as_real(hp.batch);
  const double np1 = static_cast<double>(n) + 1.0;
  double rate;
  if (use_optimal_eta) {
    rate = np1 / (m + np1);
  } else {
    const double g = 1.0 - hp.eta;
    rate = g * g + np1 * hp.eta * hp.eta / m;
  }
  LearningCurve curve;
  curve.losses.resize(static_cast<std::size_t>(hp.steps) + 1);
  for (std::int64_t t = 0; t <= hp.steps; ++t) {
    const double loss = w_norm2 * std::pow(rate, static_cast<double>(t));
    curve.losses[static_cast<std::size_t>(t)] = loss;
    if (t > 0 && !curve.diverged) check_divergence(curve, loss);
  }
  return curve;
}

double optimal_eta(const Spectrum& spec, std::int64_t batch, std::int64_t steps) {
  if (steps <= 0) return heuristic_optimal_eta(batch, spec.lambda());
  const double m = batch_as_real(batch);
  const double hi = std::min(stability_max_eta(m, spec.lambda()),
                             2.0 / spec.lambda_max());
  const double fluct_per_eta2 = 1.0 / m;
  auto final_loss = [&](double eta) {
    const LearningCurve c =
        propagate_with_fluctuation(spec, eta, eta * eta * fluct_per_eta2, steps);
    const double l = c.final_loss();
    return std::isfinite(l) ? l : std::numeric_limits<double>::infinity();
  };

  // Coarse log grid first so a non-convex landscape cannot trap the
  // golden-section refinement far from the global minimum.
  constexpr int kGrid = 64;
  const double lo = hi * 1e-4;
  std::vector<double> grid(kGrid);
  std::size_t best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGrid; ++i) {
    const double frac = static_cast<double>(i) / (kGrid - 1);
    grid[static_cast<std::size_t>(i)] =
        lo * std::pow(hi * (1.0 - 1e-9) / lo, frac);
    const double val = final_loss(grid[static_cast<std::size_t>(i)]);
    if (val < best_val) {
      best_val = val;
      best = static_cast<std::size_t>(i);
    }
  }
  const double a = grid[best == 0 ? 0 : best - 1];
  const double b = grid[std::min<std::size_t>(best + 1, kGrid - 1)];
  return golden_section(final_loss, a, b, 200);
}

double resolve_eta(const EtaChoice& choice, const Spectrum& spec,
                   std::int64_t batch, std::int64_t steps) {
  switch (choice.kind) {
    case EtaChoice::Kind::fixed:
      return choice.value;
    case EtaChoice::Kind::heuristic:
      return heuristic_optimal_eta(batch, spec.lambda());
    case EtaChoice::Kind::optimal:
      return optimal_eta(spec, batch, steps);
  }
  return choice.value;
}

std::vector<ScanRow> fixed_compute_scan(const Spectrum& spec,
                                        const EtaChoice& eta,
                                        std::int64_t compute,
                                        std::span<const std::int64_t> m_values) {
  if (m_values.empty()) throw InputError("fixed-compute scan needs batch sizes");
  for (std::int64_t m : m_values) {
    if (m < 1) throw InputError("batch sizes must be >= 1");
    if (m > compute) {
      throw InputError("batch size " + std::to_string(m) +
                       " exceeds the compute budget " + std::to_string(compute));
    }
  }
  std::vector<ScanRow> rows;
  rows.reserve(m_values.size());
  for (std::int64_t m : m_values) {
    ScanRow row;
    row.m = m;
    row.t_used = compute / m;
    row.eta = resolve_eta(eta, spec, m, row.t_used);
    const LearningCurve c = propagate_noisy(spec, {row.eta, m, row.t_used});
    row.loss = c.final_loss();
    row.diverged = c.diverged;
    rows.push_back(row);
  }
  return rows;
}

void SplitSpec::validate() const {
  const std::size_t n = lambda_hat.size();
  if (n == 0 || v.size() != n) throw InputError("split: lambda_hat/v size mismatch");
  if (test_proj.rows() != static_cast<Eigen::Index>(n) ||
      test_proj.cols() != static_cast<Eigen::Index>(n)) {
    throw InputError("split: test projection must be N x N");
  }
  if (!test_bias.empty() && test_bias.size() != n) {
    throw InputError("split: test bias must be empty or length N");
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (lambda_hat[k] < 0.0) throw InputError("split: negative train eigenvalue");
    if (k > 0 && lambda_hat[k] > lambda_hat[k - 1]) {
      throw InputError("split: train eigenvalues must be descending");
    }
  }
}

SplitCurves split_curves(const SplitSpec& split, const HyperParams& hp) {
  hp.validate();
  split.validate();
  const auto& kt = kernels::active();
  const std::size_t n = split.lambda_hat.size();
  const double eta = hp.eta;
  const double m = batch_as_real(hp.batch);
  const double fluct = eta * eta / m;
  const std::span<const double> lambda(split.lambda_hat);

  const std::vector<double> a = diagonal_factors(lambda, eta, fluct);
  std::vector<double> c(n);
  std::vector<double> test_diag(n);
  for (std::size_t k = 0; k < n; ++k) {
    c[k] = split.v[k] * split.v[k];
    test_diag[k] = split.test_proj(static_cast<Eigen::Index>(k),
                                   static_cast<Eigen::Index>(k));
  }

  // Off-diagonal pairs k < l with a non-zero contribution, stored as
  // (state, ratio, weight) triples for decay_dot.
  std::vector<double> pair_state, pair_ratio, pair_weight;
  const double cross = eta * eta * (1.0 + 1.0 / m);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = k + 1; l < n; ++l) {
      const double mkl = split.test_proj(static_cast<Eigen::Index>(k),
                                         static_cast<Eigen::Index>(l));
      const double mlk = split.test_proj(static_cast<Eigen::Index>(l),
                                         static_cast<Eigen::Index>(k));
      const double w = (mkl + mlk) * split.v[k] * split.v[l];
      if (w == 0.0) continue;
      pair_state.push_back(1.0);
      pair_ratio.push_back(1.0 - eta * lambda[k] - eta * lambda[l] +
                           cross * lambda[k] * lambda[l]);
      pair_weight.push_back(w);
    }
  }

  // Mean discrepancy E[Delta_t]_k = -(1 - eta l_k)^t v_k, weighted by 2 g_k.
  std::vector<double> mean_state, mean_ratio, mean_weight;
  if (!split.test_bias.empty()) {
    for (std::size_t k = 0; k < n; ++k) {
      if (split.test_bias[k] == 0.0) continue;
      mean_state.push_back(-split.v[k]);
      mean_ratio.push_back(1.0 - eta * lambda[k]);
      mean_weight.push_back(2.0 * split.test_bias[k]);
    }
  }

  const std::size_t steps = static_cast<std::size_t>(hp.steps);
  SplitCurves out;
  out.train.losses.resize(steps + 1);
  out.test.losses.resize(steps + 1);

  auto sum = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  };
  double s = kt.dot(lambda.data(), c.data(), n);
  double off = sum(pair_weight);
  double bias = kt.dot(mean_state.data(), mean_weight.data(), mean_state.size());
  out.train.losses[0] = split.train_offset + s;
  out.test.losses[0] = split.test_offset + kt.dot(test_diag.data(), c.data(), n) +
                       off + bias;
  for (std::size_t t = 1; t <= steps; ++t) {
    s = kt.diag_rank1_step(c.data(), a.data(), lambda.data(), fluct * s, n);
    off = kt.decay_dot(pair_state.data(), pair_ratio.data(), pair_weight.data(),
                       pair_state.size());
    bias = kt.decay_dot(mean_state.data(), mean_ratio.data(), mean_weight.data(),
                        mean_state.size());
    const double train = split.train_offset + s;
    const double test = split.test_offset + kt.dot(test_diag.data(), c.data(), n) +
                        off + bias;
    out.train.losses[t] = train;
    out.test.losses[t] = test;
    if (!out.train.diverged) check_divergence(out.train, train);
    if (!out.test.diverged) check_divergence(out.test, test);
  }
  return out;
}

bool monotonicity_check(const Spectrum& spec, double eta, std::int64_t t,
                        std::int64_t m1, std::int64_t m2) {
  if (m1 < 1 || m2 < 1) throw InputError("batch sizes must be >= 1");
  // eta = 0 freezes every batch size at L_0.
  if (eta != 0.0 && (!is_stable(spec, eta, batch_as_real(m1)) ||
      !is_stable(spec, eta, batch_as_real(m2)))) {
    throw InputError("monotonicity check requires stable configurations");
  }
  const double l1 = propagate_noisy(spec, {eta, m1, t}).final_loss();
  const double l2 = propagate_noisy(spec, {eta, m2, t}).final_loss();
  return l2 <= l1 + 1e-12 * spec.initial_loss();
}

}  // namespace sgdcurve
