#pragma once

// Exact expected test loss of constant-step SGD on a linear model with
// Gaussian features, tracked through the per-mode error coefficients
// c_{t,k} = u_k' E[(w_t - w*)(w_t - w*)'] u_k. The update matrix
//
//   A = (I - eta diag(lambda))^2 + (eta^2/m) diag(lambda^2) + (eta^2/m) lambda lambda'
//
// is diagonal plus rank one and is never formed; each step costs O(N).

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sgdcurve/curve.hpp"
#include "sgdcurve/spectral.hpp"

namespace sgdcurve {

// Requires spec.sigma2() == 0.
LearningCurve propagate(const Spectrum& spec, const HyperParams& hp);

// Adds the unlearnable variance: c_{t+1} = A c_t + (eta^2 sigma^2 / m) lambda,
// L_t = sigma^2 + lambda . c_t. Identical to propagate() when sigma2 == 0.
LearningCurve propagate_noisy(const Spectrum& spec, const HyperParams& hp);

// Same recursion with the fluctuation term scaled by an arbitrary positive
// real: A = (I - eta diag(lambda))^2 + fluct [diag(lambda^2) + lambda lambda'].
// fluct = eta^2 / m reproduces propagate_noisy; a real-valued effective batch
// m' enters as fluct = eta^2 / m'.
LearningCurve propagate_with_fluctuation(const Spectrum& spec, double eta,
                                         double fluct, std::int64_t steps);

// sigma^2 + (eta^2 sigma^2 / m) lambda' (I - A)^{-1} lambda, with the solve
// done as a diagonal solve plus a Sherman-Morrison correction. Throws
// UnstableError when A has spectral radius >= 1.
double asymptotic_loss(const Spectrum& spec, const HyperParams& hp);

// True when the spectral radius of A is below one. For this entrywise
// non-negative A that holds iff every diagonal entry d_k < 1 and
// (eta^2/m) sum_k lambda_k^2 / (1 - d_k) < 1.
bool is_stable(const Spectrum& spec, double eta, double batch);

// 1 / (1 - rho(A)), the slowest relaxation time of the mean dynamics. The
// rank-one term makes rho(A) exceed max_k A_kk, sometimes by a lot, so this is
// never shorter than the single-mode time 1 / (1 - max_k A_kk).
double relaxation_time(const Spectrum& spec, const HyperParams& hp);

// Gradient descent on the population loss (the m -> infinity limit):
// L_t = sigma^2 + sum_k v_k^2 lambda_k (1 - eta lambda_k)^{2t}.
LearningCurve population_curve(const Spectrum& spec, double eta,
                               std::int64_t steps);

// --- stability and heuristic hyperparameters -------------------------------
//
// These follow the lower bound L_t >= L_0 [(1-eta)^2 + (eta^2/m)|lambda|^2]^t,
// derived for a spectrum whose largest eigenvalue is 1. Inputs are in raw
// units; internally lambda is divided by lambda_max and eta multiplied by it.

// m_min = eta|lambda|^2 / (2 - eta). Throws InputError unless
// 0 < eta * lambda_max < 2.
double stability_min_batch(double eta, std::span<const double> lambda);

// eta_max(m) = 2m / (m + |lambda|^2), returned in raw units.
double stability_max_eta(double batch, std::span<const double> lambda);

// L_0 [(1 - eta)^2 + (eta^2/m)|lambda|^2]^t on the normalized spectrum.
// Requires sigma2 == 0. The bound holds for eta * lambda_max <= 1.
LearningCurve loss_lower_bound(const Spectrum& spec, const HyperParams& hp);

struct OptimalBatch {
  double m_star = 0.0;
  std::int64_t m_star_int = 1;
  double z = 0.0;  // root of z + z ln z = (1 - eta)^2
};

// Batch size minimizing the fixed-compute lower bound at learning rate eta.
OptimalBatch heuristic_optimal_batch(double eta, std::span<const double> lambda);

// eta* = m / (m + |lambda|^2), returned in raw units.
double heuristic_optimal_eta(std::int64_t batch, std::span<const double> lambda);

// --- isotropic features -----------------------------------------------------

// Sigma = I in N dimensions:
// L_t = [(1 - eta)^2 + (N + 1) eta^2 / m]^t ||w*||^2. With use_optimal_eta the
// learning rate is replaced by m / (m + N + 1).
LearningCurve isotropic_curve(std::int64_t n, const HyperParams& hp,
                              double w_norm2, bool use_optimal_eta);

// --- fixed compute ----------------------------------------------------------

struct EtaChoice {
  enum class Kind { fixed, heuristic, optimal };
  Kind kind = Kind::fixed;
  double value = 0.0;

  static EtaChoice fixed(double eta) { return {Kind::fixed, eta}; }
  static EtaChoice heuristic() { return {Kind::heuristic, 0.0}; }
  static EtaChoice optimal() { return {Kind::optimal, 0.0}; }
};

// Learning rate minimizing the theory loss after `steps` updates at batch m,
// searched over (0, stability_max_eta(m)).
double optimal_eta(const Spectrum& spec, std::int64_t batch, std::int64_t steps);

double resolve_eta(const EtaChoice& choice, const Spectrum& spec,
                   std::int64_t batch, std::int64_t steps);

struct ScanRow {
  std::int64_t m = 0;
  std::int64_t t_used = 0;  // floor(C / m), so t_used * m <= C
  double eta = 0.0;
  double loss = 0.0;
  bool diverged = false;
};

std::vector<ScanRow> fixed_compute_scan(const Spectrum& spec,
                                        const EtaChoice& eta,
                                        std::int64_t compute,
                                        std::span<const std::int64_t> m_values);

// --- train/test split ---------------------------------------------------------

// Coefficients in the eigenbasis of the training second-moment matrix.
// test_proj = U' Sigma_test U. The optional fields describe a test target that
// is not exactly w* . psi: the expected test loss is then
//   sum_{kl} M_kl C_kl + 2 sum_k g_k E[Delta_k] + test_offset
// with g = test_bias and E[Delta_t]_k = -(1 - eta lambda_k)^t v_k. Train loss
// adds train_offset. All extras default to zero.
struct SplitSpec {
  std::vector<double> lambda_hat;
  std::vector<double> v;
  Matrix test_proj;
  std::vector<double> test_bias;
  double train_offset = 0.0;
  double test_offset = 0.0;

  void validate() const;
};

struct SplitCurves {
  LearningCurve train;
  LearningCurve test;
};

// Diagonal coefficients follow the Gaussian recursion with lambda_hat; the
// off-diagonal ones decay as
//   (1 - eta l_k - eta l_l + eta^2 (1 + 1/m) l_k l_l)^t v_k v_l.
SplitCurves split_curves(const SplitSpec& split, const HyperParams& hp);

// L_t(m2) <= L_t(m1) + 1e-12 L_0 at the given eta and t. Both batch sizes
// must be stable unless eta = 0.
bool monotonicity_check(const Spectrum& spec, double eta, std::int64_t t,
                        std::int64_t m1, std::int64_t m2);

}  // namespace sgdcurve
