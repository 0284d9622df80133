#include "sgdcurve/general_theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sgdcurve/errors.hpp"
#include "sgdcurve/gaussian_theory.hpp"
#include "sgdcurve/kernels.hpp"
#include "sgdcurve/random.hpp"

namespace sgdcurve {

FourthMomentTensor::FourthMomentTensor(std::size_t n)
    : n_(n), data_(n * n * n * n, 0.0) {}

FourthMomentTensor::FourthMomentTensor(std::size_t n, std::vector<double> data)
    : n_(n), data_(std::move(data)) {
  if (data_.size() != n * n * n * n) {
    throw InputError("kappa: expected " + std::to_string(n * n * n * n) +
                     " entries, got " + std::to_string(data_.size()));
  }
}

FourthMomentTensor gaussian_kappa(std::span<const double> lambda) {
  const std::size_t n = lambda.size();
  for (double l : lambda) {
    if (!(l >= 0.0)) throw InputError("kappa: eigenvalues must be >= 0");
  }
  FourthMomentTensor kappa(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double lij = lambda[i] * lambda[j];
      kappa(i, j, i, j) += lij;  // d_ik d_jl
      kappa(i, j, j, i) += lij;  // d_il d_jk
    }
    for (std::size_t k = 0; k < n; ++k) {
      kappa(i, i, k, k) += lambda[i] * lambda[k];  // d_ij d_kl
    }
  }
  return kappa;
}

FourthMomentTensor empirical_kappa(const Matrix& samples) {
  const auto t_count = samples.rows();
  const auto n = static_cast<std::size_t>(samples.cols());
  if (t_count < 1) throw InputError("kappa: need at least one sample");
  FourthMomentTensor kappa(n);
  auto out = kappa.data();
  std::vector<double> pair(n * n);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = samples(t, static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < n; ++j) {
        pair[i * n + j] = pi * samples(t, static_cast<Eigen::Index>(j));
      }
    }
    // Outer product of the pair vector with itself.
    for (std::size_t a = 0; a < n * n; ++a) {
      if (pair[a] == 0.0) continue;
      kernels::active().axpy(pair[a], pair.data(), out.data() + a * n * n, n * n);
    }
  }
  const double inv = 1.0 / static_cast<double>(t_count);
  for (double& x : out) x *= inv;
  return kappa;
}

LearningCurve propagate_general(std::span<const double> lambda,
                                std::span<const double> v,
                                const FourthMomentTensor& kappa,
                                const HyperParams& hp, std::size_t max_modes,
                                Matrix* final_state) {
  hp.validate();
  const std::size_t n = lambda.size();
  if (n == 0 || v.size() != n) throw InputError("general: lambda/v size mismatch");
  if (kappa.n() != n) throw InputError("general: kappa dimension does not match lambda");
  if (n > max_modes) {
    throw InputError("general: " + std::to_string(n) + " modes exceeds the limit of " +
                     std::to_string(max_modes));
  }
  const auto& kt = kernels::active();
  const double m = static_cast<double>(hp.batch);
  const double eta = hp.eta;
  const double fluct = eta * eta / m;
  const double cross = eta * eta * (m - 1.0) / m;
  const std::size_t nn = n * n;

  std::vector<double> factor(nn);
  std::vector<double> c(nn), next(nn);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      factor[i * n + j] =
          1.0 - eta * (lambda[i] + lambda[j]) + cross * lambda[i] * lambda[j];
      c[i * n + j] = v[i] * v[j];
    }
  }
  auto loss_of = [&](const std::vector<double>& cm) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += lambda[k] * cm[k * n + k];
    return s;
  };

  const auto kdata = kappa.data();
  LearningCurve curve;
  curve.losses.resize(static_cast<std::size_t>(hp.steps) + 1);
  curve.losses[0] = loss_of(c);
  const double l0 = curve.losses[0];
  for (std::int64_t t = 1; t <= hp.steps; ++t) {
    for (std::size_t a = 0; a < nn; ++a) {
      next[a] = factor[a] * c[a] + fluct * kt.dot(kdata.data() + a * nn, c.data(), nn);
    }
    c.swap(next);
    const double loss = loss_of(c);
    curve.losses[static_cast<std::size_t>(t)] = loss;
    if (!curve.diverged &&
        (!std::isfinite(loss) || (l0 > 0.0 && loss > kDivergenceFactor * l0))) {
      curve.diverged = true;
    }
  }
  if (final_state != nullptr) {
    final_state->resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        (*final_state)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            c[i * n + j];
      }
    }
  }
  return curve;
}

LearningCurve regularity_bound_curve(const Spectrum& spec, double alpha,
                                     const HyperParams& hp) {
  hp.validate();
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw InputError("regularity constant must be finite and >= 0");
  }
  if (spec.sigma2() != 0.0) throw InputError("regularity bound requires sigma2 == 0");
  const double fluct = alpha * hp.eta * hp.eta / static_cast<double>(hp.batch);
  return propagate_with_fluctuation(spec, hp.eta, fluct, hp.steps);
}

namespace {

struct Probe {
  Matrix q;    // sum_kl kappa_ijkl g_k g_l
  Vector b;    // Lambda g
  double gLg;  // g' Lambda g
};

Probe make_probe(const FourthMomentTensor& kappa, std::span<const double> lambda,
                 const Vector& g) {
  const auto n = static_cast<std::size_t>(g.size());
  Probe p;
  p.q.resize(g.size(), g.size());
  std::vector<double> gg(n * n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) gg[k * n + l] = g(static_cast<Eigen::Index>(k)) *
                                                       g(static_cast<Eigen::Index>(l));
  }
  const auto kd = kappa.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      p.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          kernels::active().dot(kd.data() + (i * n + j) * n * n, gg.data(), n * n);
    }
  }
  p.q = 0.5 * (p.q + p.q.transpose()).eval();
  p.b.resize(g.size());
  p.gLg = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    p.b(kk) = lambda[k] * g(kk);
    p.gLg += lambda[k] * g(kk) * g(kk);
  }
  return p;
}

void check_probe_inputs(const FourthMomentTensor& kappa,
                        std::span<const double> lambda, int probes) {
  if (kappa.n() != lambda.size() || lambda.empty()) {
    throw InputError("alpha probe: kappa dimension does not match lambda");
  }
  if (probes < 1) throw InputError("alpha probe: need at least one probe");
  for (double l : lambda) {
    if (!(l > 0.0)) throw InputError("alpha probe: eigenvalues must be > 0");
  }
}

Vector draw_probe(Rng& rng, std::size_t n) {
  Vector g(static_cast<Eigen::Index>(n));
  for (Eigen::Index k = 0; k < g.size(); ++k) g(k) = rng.normal();
  return g;
}

}  // namespace

AlphaEstimate estimate_alpha(const FourthMomentTensor& kappa,
                             std::span<const double> lambda, int probes,
                             std::uint64_t seed) {
  check_probe_inputs(kappa, lambda, probes);
  const std::size_t n = lambda.size();
  const Eigen::Map<const Vector> lam(lambda.data(), static_cast<Eigen::Index>(n));
  Rng rng(seed);
  AlphaEstimate est;
  est.probes = probes;
  for (int p = 0; p < probes; ++p) {
    const Vector g = draw_probe(rng, n);
    const Probe pr = make_probe(kappa, lambda, g);
    const Matrix bb = pr.b * pr.b.transpose();
    const Matrix lhs = pr.q - bb;
    Matrix rhs = bb;
    rhs.diagonal() += pr.gLg * lam;
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(lhs, rhs,
                                                            Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
      throw InputError("alpha probe: generalized eigensolver failed");
    }
    const double top = solver.eigenvalues().maxCoeff();
    if (p == 0 || top > est.alpha) {
      est.alpha = std::max(top, 0.0);
      est.worst_probe.assign(g.data(), g.data() + g.size());
    }
  }
  return est;
}

double probe_violation(const FourthMomentTensor& kappa,
                       std::span<const double> lambda, double alpha,
                       int probes, std::uint64_t seed) {
  check_probe_inputs(kappa, lambda, probes);
  const std::size_t n = lambda.size();
  const Eigen::Map<const Vector> lam(lambda.data(), static_cast<Eigen::Index>(n));
  Rng rng(seed);
  double worst = -std::numeric_limits<double>::infinity();
  for (int p = 0; p < probes; ++p) {
    const Vector g = draw_probe(rng, n);
    const Probe pr = make_probe(kappa, lambda, g);
    Matrix rhs = (alpha + 1.0) * pr.b * pr.b.transpose();
    rhs.diagonal() += alpha * pr.gLg * lam;
    const Matrix gap = rhs - pr.q;
    Eigen::SelfAdjointEigenSolver<Matrix> gap_eig(gap, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Matrix> rhs_eig(rhs, Eigen::EigenvaluesOnly);
    const double scale = std::max(rhs_eig.eigenvalues().maxCoeff(), 1e-300);
    worst = std::max(worst, -gap_eig.eigenvalues().minCoeff() / scale);
  }
  return worst;
}

}  // namespace sgdcurve
