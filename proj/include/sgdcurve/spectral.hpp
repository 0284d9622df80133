#pragma once

// Spectral data model: eigenvalues of the feature second-moment matrix, the
// squared target coefficient carried by each eigenmode, and the target power
// left outside the feature span. Everything downstream consumes a Spectrum.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sgdcurve {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Spectrum {
 public:
  std::span<const double> lambda() const { return lambda_; }
  std::span<const double> v2() const { return v2_; }
  double sigma2() const { return sigma2_; }
  std::size_t size() const { return lambda_.size(); }

  double lambda_max() const { return lambda_.front(); }

  // sum_k lambda_k v2_k, the learnable part of the initial loss.
  double signal_power() const;

  // Loss of the zero predictor: signal_power() + sigma2().
  double initial_loss() const { return signal_power() + sigma2_; }

  // sum_k lambda_k^2
  double lambda_norm2() const;

  Spectrum with_sigma2(double sigma2) const;

 private:
  friend Spectrum validate_spectrum(std::vector<double>, std::vector<double>,
                                    double);
  Spectrum() = default;

  std::vector<double> lambda_;
  std::vector<double> v2_;
  double sigma2_ = 0.0;
};

// Sorts modes by descending eigenvalue (v2 follows), clamps eigenvalues below
// 1e-14 * max to zero and rejects non-PSD or negative inputs.
Spectrum validate_spectrum(std::vector<double> lambda, std::vector<double> v2,
                           double sigma2);

struct Eigendecomposition {
  std::vector<double> lambda;  // descending
  Matrix basis;                // column k is the eigenvector of lambda[k]
};

struct HyperParams {
  double eta = 0.0;
  std::int64_t batch = 1;
  std::int64_t steps = 0;

  void validate() const;
};

// Eigenvalues of a symmetric PSD matrix in descending order. Eigenvalues in
// [-1e-10 * lambda_max, 0) are clamped to 0; anything more negative, or an
// input asymmetric beyond 1e-10 relative, is rejected.
Eigendecomposition eigendecompose_covariance(const Matrix& sigma);

// v_k = u_k' psi_y / lambda_k for lambda_k > 0 (so that v_k = u_k . w* when
// y = w* . psi + y_perp), v_k = 0 on the null space, and
// sigma2 = max(0, y2 - sum_k lambda_k v_k^2).
Spectrum target_coefficients(const Eigendecomposition& decomp,
                             std::span<const double> psi_y, double y2);

struct GramSpectrum {
  Spectrum spectrum;
  Eigendecomposition decomp;  // of gram / M, basis is M x M
};

// Spectrum of the atomic measure on M points from its kernel gram matrix.
GramSpectrum gram_spectrum(const Matrix& gram, std::span<const double> y);

}  // namespace sgdcurve
