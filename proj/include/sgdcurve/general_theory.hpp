#pragma once

// Exact dynamics for arbitrary feature distributions. Beyond second moments
// the expected update of the error matrix C_t = E[Delta_t Delta_t'] depends on
// the fourth moments kappa_ijkl = <phi_i phi_j phi_k phi_l> of the features in
// the covariance eigenbasis, so the state is the full N x N matrix and each
// step costs O(N^4). Meant for small N.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sgdcurve/curve.hpp"
#include "sgdcurve/spectral.hpp"

namespace sgdcurve {

inline constexpr std::size_t kDefaultGeneralMaxModes = 64;

// Dense row-major (i, j, k, l) storage.
class FourthMomentTensor {
 public:
  FourthMomentTensor() = default;
  explicit FourthMomentTensor(std::size_t n);
  FourthMomentTensor(std::size_t n, std::vector<double> data);

  std::size_t n() const { return n_; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double operator()(std::size_t i, std::size_t j, std::size_t k,
                    std::size_t l) const {
    return data_[((i * n_ + j) * n_ + k) * n_ + l];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k,
                     std::size_t l) {
    return data_[((i * n_ + j) * n_ + k) * n_ + l];
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// Wick's theorem for independent Gaussian modes with variances lambda:
// kappa_ijkl = l_i l_j d_ik d_jl + l_i l_k d_ij d_kl + l_i l_j d_il d_jk.
FourthMomentTensor gaussian_kappa(std::span<const double> lambda);

// (1/T) sum_t phi_ti phi_tj phi_tk phi_tl over the rows of a T x N matrix.
FourthMomentTensor empirical_kappa(const Matrix& samples);

// C_0 = v v'. C_{t+1,ij} = (1 - eta(l_i + l_j) + eta^2 (m-1)/m l_i l_j) C_t,ij
//                          + (eta^2/m) sum_kl kappa_ijkl C_t,kl
// L_t = sum_k l_k C_t,kk. If final_state is non-null it receives C_steps.
LearningCurve propagate_general(std::span<const double> lambda,
                                std::span<const double> v,
                                const FourthMomentTensor& kappa,
                                const HyperParams& hp,
                                std::size_t max_modes = kDefaultGeneralMaxModes,
                                Matrix* final_state = nullptr);

// Upper bound lambda' A~^t v^2 for features whose fourth moments obey the
// regularity condition with constant alpha, where
// A~ = (I - eta diag(lambda))^2 + (alpha eta^2/m)[diag(lambda^2) + lambda lambda'].
// alpha = 1 is the Gaussian curve; in general this is the Gaussian curve at the
// real-valued batch m / alpha. Requires sigma2 == 0.
LearningCurve regularity_bound_curve(const Spectrum& spec, double alpha,
                                     const HyperParams& hp);

struct AlphaEstimate {
  double alpha = 0.0;               // smallest alpha passing every probe
  std::vector<double> worst_probe;  // g of the rank-one probe G = g g'
  int probes = 0;
};

// Smallest alpha such that, for each probe G = g g' with g drawn from a seeded
// standard normal stream,
//   <psi psi' G psi psi'> <= (alpha + 1) Sigma G Sigma + alpha Sigma Tr(Sigma G)
// in the PSD order. Per probe this is the top generalized eigenvalue of
// (Q - b b', b b' + (g' Lambda g) Lambda) with Q_ij = sum_kl kappa_ijkl g_k g_l and
// b = Lambda g. Requires every lambda > 0.
AlphaEstimate estimate_alpha(const FourthMomentTensor& kappa,
                             std::span<const double> lambda, int probes,
                             std::uint64_t seed);

// Largest violation of the probe inequality at the given alpha over the same
// probes, as the most negative eigenvalue of RHS - LHS divided by the largest
// eigenvalue of RHS. Non-positive return means all probes pass.
double probe_violation(const FourthMomentTensor& kappa,
                       std::span<const double> lambda, double alpha,
                       int probes, std::uint64_t seed);

}  // namespace sgdcurve
