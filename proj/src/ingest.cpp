#include "sgdcurve/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sgdcurve/errors.hpp"
#include "sgdcurve/random.hpp"

namespace sgdcurve {

void DatasetBundle::validate() const {
  if (features.rows() == 0 || features.cols() == 0) {
    throw InputError("dataset has no samples or no features");
  }
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw InputError("dataset has " + std::to_string(features.rows()) +
                     " feature rows but " + std::to_string(labels.size()) + " labels");
  }
  if (!features.allFinite()) throw InputError("dataset features are not finite");
  for (double y : labels) {
    if (!std::isfinite(y)) throw InputError("dataset labels are not finite");
  }
}

Matrix relu_random_features(const Matrix& x, std::int64_t n_features,
                            std::uint64_t seed) {
  if (n_features < 1) throw InputError("need at least one random feature");
  if (x.cols() == 0) throw InputError("inputs have zero dimension");
  const Eigen::Index d = x.cols();
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(seed);
  Matrix g(n_features, d);
  for (Eigen::Index k = 0; k < g.rows(); ++k) {
    for (Eigen::Index j = 0; j < d; ++j) g(k, j) = sd * rng.normal();
  }
  return (x * g.transpose()).cwiseMax(0.0);
}

Matrix empirical_covariance(const Matrix& psi) {
  if (psi.rows() < 1) throw InputError("covariance needs at least one sample");
  Matrix s = Matrix::Zero(psi.cols(), psi.cols());
  s.selfadjointView<Eigen::Lower>().rankUpdate(psi.transpose());
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  return s / static_cast<double>(psi.rows());
}

Spectrum build_spectrum(const DatasetBundle& bundle) {
  bundle.validate();
  const Matrix& psi = bundle.features;
  const Eigen::Map<const Vector> y(bundle.labels.data(), psi.rows());
  const double inv_m = 1.0 / static_cast<double>(psi.rows());
  if (psi.cols() <= psi.rows()) {
    const Eigendecomposition decomp = eigendecompose_covariance(empirical_covariance(psi));
    const Vector psi_y = psi.transpose() * y * inv_m;
    return target_coefficients(decomp, std::span<const double>(psi_y.data(), psi_y.size()),
                               y.squaredNorm() * inv_m);
  }
  Matrix gram = Matrix::Zero(psi.rows(), psi.rows());
  gram.selfadjointView<Eigen::Lower>().rankUpdate(psi);
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  return gram_spectrum(gram, bundle.labels).spectrum;
}

SplitSpec build_split(const DatasetBundle& train, const DatasetBundle& test) {
  train.validate();
  test.validate();
  if (train.features.cols() != test.features.cols()) {
    throw InputError("train has " + std::to_string(train.features.cols()) +
                     " features but test has " + std::to_string(test.features.cols()));
  }
  const Eigendecomposition decomp =
      eigendecompose_covariance(empirical_covariance(train.features));
  const Matrix& u = decomp.basis;
  const auto n = static_cast<std::size_t>(u.cols());

  const double inv_m = 1.0 / static_cast<double>(train.features.rows());
  const Eigen::Map<const Vector> y(train.labels.data(), train.features.rows());
  const Vector h_train = u.transpose() * (train.features.transpose() * y) * inv_m;
  const double top = std::max(decomp.lambda.front(), 0.0);

  SplitSpec split;
  split.lambda_hat = decomp.lambda;
  split.v.assign(n, 0.0);
  double explained = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double l = decomp.lambda[k];
    if (l <= 1e-14 * top) {
      split.lambda_hat[k] = 0.0;
      continue;
    }
    split.v[k] = h_train(static_cast<Eigen::Index>(k)) / l;
    explained += l * split.v[k] * split.v[k];
  }
  split.train_offset = std::max(0.0, y.squaredNorm() * inv_m - explained);

  const double inv_mt = 1.0 / static_cast<double>(test.features.rows());
  const Eigen::Map<const Vector> yt(test.labels.data(), test.features.rows());
  const Matrix rotated = test.features * u;
  Matrix proj = Matrix::Zero(u.cols(), u.cols());
  proj.selfadjointView<Eigen::Lower>().rankUpdate(rotated.transpose(), inv_mt);
  proj.triangularView<Eigen::StrictlyUpper>() = proj.transpose();
  const Vector h_test = rotated.transpose() * yt * inv_mt;
  const Eigen::Map<const Vector> v(split.v.data(), static_cast<Eigen::Index>(n));
  const Vector pv = proj * v;
  const Vector bias = pv - h_test;
  split.test_bias.assign(bias.data(), bias.data() + bias.size());
  split.test_offset = v.dot(pv) - 2.0 * v.dot(h_test) + yt.squaredNorm() * inv_mt;
  split.test_proj = std::move(proj);
  return split;
}

}  // namespace sgdcurve
