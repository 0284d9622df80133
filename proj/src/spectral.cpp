#include "sgdcurve/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sgdcurve/errors.hpp"

namespace sgdcurve {
namespace {

constexpr double kNegativeTolerance = 1e-10;
constexpr double kZeroClamp = 1e-14;

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(),
                     [](double x) { return std::isfinite(x); });
}

}  // namespace

double Spectrum::signal_power() const {
  double acc = 0.0;
  for (std::size_t k = 0; k < lambda_.size(); ++k) acc += lambda_[k] * v2_[k];
  return acc;
}

double Spectrum::lambda_norm2() const {
  double acc = 0.0;
  for (double l : lambda_) acc += l * l;
  return acc;
}

Spectrum Spectrum::with_sigma2(double sigma2) const {
  return validate_spectrum(lambda_, v2_, sigma2);
}

Spectrum validate_spectrum(std::vector<double> lambda, std::vector<double> v2,
                           double sigma2) {
  if (lambda.empty()) throw InputError("spectrum: no modes");
  if (lambda.size() != v2.size()) {
    throw InputError("spectrum: lambda has " + std::to_string(lambda.size()) +
                     " entries but v2 has " + std::to_string(v2.size()));
  }
  if (!all_finite(lambda) || !all_finite(v2) || !std::isfinite(sigma2)) {
    throw InputError("spectrum: non-finite entry");
  }
  if (sigma2 < 0.0) throw InputError("spectrum: sigma2 must be >= 0");
  if (std::any_of(v2.begin(), v2.end(), [](double x) { return x < 0.0; })) {
    throw InputError("spectrum: negative v2 entry");
  }

  const double top = *std::max_element(lambda.begin(), lambda.end());
  const double scale = std::max(top, 0.0);
  for (double& l : lambda) {
    if (l < -kNegativeTolerance * scale || (scale == 0.0 && l < 0.0)) {
      throw InputError("spectrum: negative eigenvalue " + std::to_string(l) +
                       " (input is not PSD)");
    }
    if (l < kZeroClamp * scale) l = 0.0;
  }

  std::vector<std::size_t> order(lambda.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return lambda[a] > lambda[b];
  });

  Spectrum s;
  s.lambda_.reserve(order.size());
  s.v2_.reserve(order.size());
  for (std::size_t idx : order) {
    s.lambda_.push_back(lambda[idx]);
    s.v2_.push_back(v2[idx]);
  }
  s.sigma2_ = sigma2;
  return s;
}

void HyperParams::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw InputError("learning rate must be finite and >= 0");
  }
  if (batch < 1) throw InputError("batch size must be >= 1");
  if (steps < 0) throw InputError("step count must be >= 0");
}

Eigendecomposition eigendecompose_covariance(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    throw InputError("covariance must be a non-empty square matrix");
  }
  if (!sigma.allFinite()) throw InputError("covariance has non-finite entries");
  const double scale = sigma.cwiseAbs().maxCoeff();
  const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
  if (asym > kNegativeTolerance * scale) {
    throw InputError("covariance is not symmetric (max asymmetry " +
                     std::to_string(asym) + ")");
  }

  const Matrix sym = 0.5 * (sigma + sigma.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw InputError("eigendecomposition did not converge");
  }

  const Eigen::Index n = sym.rows();
  Eigendecomposition out;
  out.lambda.resize(static_cast<std::size_t>(n));
  out.basis.resize(n, n);
  // Eigen returns ascending order.
  for (Eigen::Index k = 0; k < n; ++k) {
    out.lambda[static_cast<std::size_t>(k)] = solver.eigenvalues()(n - 1 - k);
    out.basis.col(k) = solver.eigenvectors().col(n - 1 - k);
  }
  const double top = std::max(out.lambda.front(), 0.0);
  for (double& l : out.lambda) {
    if (l < -kNegativeTolerance * top) {
      throw InputError("covariance has eigenvalue " + std::to_string(l) +
                       " below the PSD tolerance");
    }
    if (l < 0.0) l = 0.0;
  }
  return out;
}

Spectrum target_coefficients(const Eigendecomposition& decomp,
                             std::span<const double> psi_y, double y2) {
  const auto n = static_cast<Eigen::Index>(decomp.lambda.size());
  if (static_cast<Eigen::Index>(psi_y.size()) != n || decomp.basis.rows() != n) {
    throw InputError("target projection length does not match the basis");
  }
  if (!(y2 >= 0.0)) throw InputError("target second moment must be >= 0");

  const Eigen::Map<const Vector> py(psi_y.data(), n);
  const Vector proj = decomp.basis.transpose() * py;
  const double top = std::max(decomp.lambda.front(), 0.0);

  std::vector<double> v2(decomp.lambda.size(), 0.0);
  double explained = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double l = decomp.lambda[static_cast<std::size_t>(k)];
    if (l <= kZeroClamp * top) continue;
    const double v = proj(k) / l;
    v2[static_cast<std::size_t>(k)] = v * v;
    explained += l * v * v;
  }
  double sigma2 = y2 - explained;
  if (sigma2 < -1e-8 * y2) {
    throw InputError("target projections exceed the target second moment; "
                     "inputs are inconsistent");
  }
  sigma2 = std::max(0.0, sigma2);
  return validate_spectrum(decomp.lambda, std::move(v2), sigma2);
}

GramSpectrum gram_spectrum(const Matrix& gram, std::span<const double> y) {
  const Eigen::Index m = gram.rows();
  if (m == 0 || gram.cols() != m) throw InputError("gram matrix must be square");
  if (static_cast<Eigen::Index>(y.size()) != m) {
    throw InputError("label count does not match the gram matrix");
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  Eigendecomposition decomp = eigendecompose_covariance(gram * inv_m);

  const Eigen::Map<const Vector> yv(y.data(), m);
  const Vector proj = decomp.basis.transpose() * yv;
  const double y2 = yv.squaredNorm() * inv_m;
  const double top = std::max(decomp.lambda.front(), 0.0);

  // Feature-space eigenvector u_k = Psi' e_k / sqrt(M lambda_k), hence
  // u_k . w* = e_k' y / sqrt(M lambda_k) and lambda_k v_k^2 = (e_k' y)^2 / M.
  std::vector<double> v2(static_cast<std::size_t>(m), 0.0);
  double explained = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double l = decomp.lambda[static_cast<std::size_t>(k)];
    if (l <= kZeroClamp * top) continue;
    const double p2 = proj(k) * proj(k) * inv_m;
    v2[static_cast<std::size_t>(k)] = p2 / l;
    explained += p2;
  }
  const double sigma2 = std::max(0.0, y2 - explained);
  Spectrum spec = validate_spectrum(decomp.lambda, std::move(v2), sigma2);
  return GramSpectrum{std::move(spec), std::move(decomp)};
}

}  // namespace sgdcurve
