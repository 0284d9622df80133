#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "sgdcurve/errors.hpp"
#include "sgdcurve/random.hpp"
#include "sgdcurve/spectral.hpp"

using namespace sgdcurve;

namespace {

Matrix gaussian_matrix(Rng& r, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = r.normal();
  return m;
}

bool non_increasing(std::span<const double> x) {
  return std::is_sorted(x.begin(), x.end(), std::greater<>());
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("validate_spectrum") {
  const Spectrum a = validate_spectrum({1, 0.5}, {1, 1}, 0);
  CHECK(a.lambda()[0] == 1.0);
  CHECK(a.lambda()[1] == 0.5);
  CHECK(a.sigma2() == 0.0);

  const Spectrum b = validate_spectrum({0.5, 1}, {2, 3}, 0.1);
  CHECK(b.lambda()[0] == 1.0);
  CHECK(b.v2()[0] == 3.0);
  CHECK(b.lambda()[1] == 0.5);
  CHECK(b.v2()[1] == 2.0);
  CHECK(b.sigma2() == 0.1);
  CHECK(b.initial_loss() == doctest::Approx(1.0 * 3 + 0.5 * 2 + 0.1));

  CHECK_THROWS_AS(validate_spectrum({1, -1}, {1, 1}, 0), InputError);
  CHECK_THROWS_AS(validate_spectrum({1}, {1, 1}, 0), InputError);
  CHECK_THROWS_AS(validate_spectrum({}, {}, 0), InputError);
  CHECK_THROWS_AS(validate_spectrum({1}, {-1}, 0), InputError);
  CHECK_THROWS_AS(validate_spectrum({1}, {1}, -0.5), InputError);
  CHECK_THROWS_AS(validate_spectrum({NAN}, {1}, 0), InputError);
  // Round-off negatives are clamped.
  CHECK(validate_spectrum({1, -1e-12}, {1, 1}, 0).lambda()[1] == 0.0);
}

TEST_CASE("eigendecompose_covariance examples") {
  const auto id = eigendecompose_covariance(Matrix::Identity(3, 3));
  for (double l : id.lambda) CHECK(l == doctest::Approx(1.0));
  CHECK((id.basis.transpose() * id.basis - Matrix::Identity(3, 3)).norm() < 1e-12);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 0.25;
  d(1, 1) = 4.0;
  const auto dd = eigendecompose_covariance(d);
  CHECK(dd.lambda[0] == doctest::Approx(4.0));
  CHECK(dd.lambda[1] == doctest::Approx(0.25));
  CHECK(std::abs(dd.basis(1, 0)) == doctest::Approx(1.0));
  CHECK(std::abs(dd.basis(0, 1)) == doctest::Approx(1.0));

  Rng r(5);
  const Matrix g = gaussian_matrix(r, 8, 8);
  const Matrix s = g * g.transpose();
  const auto e = eigendecompose_covariance(s);
  const Eigen::Map<const Vector> l(e.lambda.data(), 8);
  const Matrix rec = e.basis * l.asDiagonal() * e.basis.transpose();
  CHECK((rec - s).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(non_increasing(e.lambda));

  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 0.1;
  CHECK_THROWS_AS(eigendecompose_covariance(asym), InputError);
  Matrix neg = Matrix::Identity(2, 2);
  neg(1, 1) = -0.5;
  CHECK_THROWS_AS(eigendecompose_covariance(neg), InputError);
}

TEST_CASE("target_coefficients examples") {
  Eigendecomposition one{{1.0}, Matrix::Identity(1, 1)};
  const double py = 0.7;
  const Spectrum s = target_coefficients(one, std::span<const double>(&py, 1), 1.0);
  CHECK(s.v2()[0] == doctest::Approx(0.49));
  CHECK(s.sigma2() == doctest::Approx(0.51));

  // Monte Carlo estimate of <psi y> for y = 0.7 psi + noise agrees.
  Rng r(17);
  const int n = 200000;
  double psi_y = 0, y2 = 0;
  for (int i = 0; i < n; ++i) {
    const double psi = r.normal();
    const double y = 0.7 * psi + std::sqrt(0.51) * r.normal();
    psi_y += psi * y;
    y2 += y * y;
  }
  const double mc_py = psi_y / n;
  const Spectrum mc = target_coefficients(one, std::span<const double>(&mc_py, 1), y2 / n);
  CHECK(std::sqrt(mc.v2()[0]) == doctest::Approx(0.7).epsilon(0.02));
  CHECK(mc.sigma2() == doctest::Approx(0.51).epsilon(0.03));

  Eigendecomposition two{{1.0, 0.5}, Matrix::Identity(2, 2)};
  const std::vector<double> zero{0.0, 0.0};
  const Spectrum noise = target_coefficients(two, zero, 0.3);
  CHECK(noise.v2()[0] == 0.0);
  CHECK(noise.sigma2() == doctest::Approx(0.3));

  // Null-space modes carry no coefficient; their target power is unlearnable.
  Eigendecomposition null{{1.0, 0.0}, Matrix::Identity(2, 2)};
  const std::vector<double> py2{0.5, 0.0};
  const Spectrum ns = target_coefficients(null, py2, 1.0);
  CHECK(ns.v2()[1] == 0.0);
  CHECK(ns.sigma2() == doctest::Approx(0.75));
}

TEST_CASE("learnable Gaussian target leaves no residual") {
  Rng r(19);
  const int n = 4, samples = 1000000;
  const std::vector<double> sd{1.0, 0.8, 0.5, 0.3}, w{0.3, -1.0, 0.5, 2.0};
  Matrix cov = Matrix::Zero(n, n);
  Vector py = Vector::Zero(n);
  double y2 = 0;
  Vector psi(n);
  for (int s = 0; s < samples; ++s) {
    double y = 0;
    for (int k = 0; k < n; ++k) {
      psi(k) = sd[k] * r.normal();
      y += w[k] * psi(k);
    }
    cov.noalias() += psi * psi.transpose();
    py += y * psi;
    y2 += y * y;
  }
  cov /= samples;
  py /= samples;
  const Spectrum spec = target_coefficients(eigendecompose_covariance(cov),
                                            std::span<const double>(py.data(), n), y2 / samples);
  CHECK(spec.sigma2() < 1e-6);
}

TEST_CASE("gram_spectrum examples") {
  const int m = 5;
  const std::vector<double> y{0.6, 0.0, 0.8, 0.0, 0.0};
  const auto g = gram_spectrum(m * Matrix::Identity(m, m), y);
  for (double l : g.spectrum.lambda()) CHECK(l == doctest::Approx(1.0));

  // Linear kernel with a learnable target.
  Rng r(23);
  const Matrix x = gaussian_matrix(r, 50, 6);
  Vector w(6);
  for (int j = 0; j < 6; ++j) w(j) = r.normal();
  const Vector yv = x * w;
  const std::vector<double> ys(yv.data(), yv.data() + 50);
  const auto lin = gram_spectrum(x * x.transpose(), ys);
  CHECK(lin.spectrum.sigma2() < 1e-10 * yv.squaredNorm() / 50);
  // Only six modes are non-zero and their eigenvalues equal those of the covariance.
  const auto cov = eigendecompose_covariance(x.transpose() * x / 50.0);
  for (int k = 0; k < 6; ++k) CHECK(lin.spectrum.lambda()[k] == doctest::Approx(cov.lambda[k]));
  CHECK(lin.spectrum.lambda()[6] == 0.0);

  const std::vector<double> y3{1 / std::sqrt(3.0), 1 / std::sqrt(3.0), 1 / std::sqrt(3.0)};
  const auto d3 = gram_spectrum(Matrix::Identity(3, 3) * 3.0, y3);
  CHECK(d3.spectrum.signal_power() == doctest::Approx(1.0 / 3.0));
  CHECK(d3.spectrum.sigma2() == doctest::Approx(0.0));
}

TEST_CASE("property: sorting, Parseval and permutation invariance") {
  std::mt19937_64 gen(29);
  for (int trial = 0; trial < 20; ++trial) {
    Rng r(100 + trial);
    const int m = 10 + trial, d = 3 + trial % 7;
    const Matrix x = gaussian_matrix(r, m, d);
    std::vector<double> y(m);
    Vector w(d);
    for (int j = 0; j < d; ++j) w(j) = r.normal();
    const Vector yv = x * w;
    for (int i = 0; i < m; ++i) y[i] = yv(i);
    double y2 = 0;
    for (double v : y) y2 += v * v;
    y2 /= m;

    const auto gs = gram_spectrum(x * x.transpose(), y);
    CHECK(non_increasing(gs.spectrum.lambda()));
    CHECK(std::abs(gs.spectrum.initial_loss() - y2) < 1e-8 * y2);

    std::vector<int> perm(m);
    for (int i = 0; i < m; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), gen);
    Matrix xp(m, d);
    std::vector<double> yp(m);
    for (int i = 0; i < m; ++i) {
      xp.row(i) = x.row(perm[i]);
      yp[i] = y[perm[i]];
    }
    const auto gp = gram_spectrum(xp * xp.transpose(), yp);
    for (int k = 0; k < m; ++k) {
      CHECK(std::abs(gp.spectrum.lambda()[k] - gs.spectrum.lambda()[k]) <=
            1e-10 * gs.spectrum.lambda_max());
    }

    // Labels with a component outside the span: Parseval with sigma2.
    for (int i = 0; i < m; ++i) y[i] += r.normal();
    y2 = 0;
    for (double v : y) y2 += v * v;
    y2 /= m;
    const Matrix cov = x.transpose() * x / m;
    const Vector py = x.transpose() * Eigen::Map<const Vector>(y.data(), m) / m;
    const Spectrum s = target_coefficients(eigendecompose_covariance(cov),
                                           std::span<const double>(py.data(), d), y2);
    CHECK(non_increasing(s.lambda()));
    CHECK(std::abs(s.initial_loss() - y2) < 1e-8 * y2);
  }
}

TEST_CASE("hyperparameter validation") {
  CHECK_NOTHROW((HyperParams{0.1, 1, 0}.validate()));
  CHECK_THROWS_AS((HyperParams{-0.1, 1, 1}.validate()), InputError);
  CHECK_THROWS_AS((HyperParams{0.1, 0, 1}.validate()), InputError);
  CHECK_THROWS_AS((HyperParams{0.1, 1, -1}.validate()), InputError);
  CHECK_THROWS_AS((HyperParams{INFINITY, 1, 1}.validate()), InputError);
}

}
