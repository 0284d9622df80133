#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sgdcurve/errors.hpp"
#include "sgdcurve/gaussian_theory.hpp"
#include "sgdcurve/general_theory.hpp"
#include "sgdcurve/ingest.hpp"
#include "sgdcurve/random.hpp"
#include "sgdcurve/simulator.hpp"

using namespace sgdcurve;

namespace {

RunConfig config(HyperParams hp, std::int64_t trials, std::uint64_t seed) {
  RunConfig c;
  c.hp = hp;
  c.trials = trials;
  c.base_seed = seed;
  return c;
}

double max_z(const LearningCurve& mc, const std::vector<double>& ref, std::int64_t trials) {
  double worst = 0.0;
  for (std::size_t t = 1; t < ref.size(); ++t) {
    const double se = (*mc.std)[t] / std::sqrt(double(trials));
    worst = std::max(worst, std::abs(mc.losses[t] - ref[t]) / se);
  }
  return worst;
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("zero learning rate is flat") {
  const Spectrum s = validate_spectrum({1.0, 0.5}, {1.0, 2.0}, 0.25);
  const LearningCurve c = simulate(FeatureSampler::gaussian(), s, config({0.0, 3, 10}, 50, 1));
  for (std::size_t t = 0; t < c.losses.size(); ++t) {
    CHECK(c.losses[t] == doctest::Approx(2.25));
    CHECK((*c.std)[t] == doctest::Approx(0.0));
  }
}

TEST_CASE("scalar case matches the exact value") {
  const Spectrum s = validate_spectrum({1.0}, {1.0}, 0.0);
  const RunConfig cfg = config({0.5, 1, 3}, 100000, 2);
  const LearningCurve c = simulate(FeatureSampler::gaussian(), s, cfg);
  CHECK(c.losses[0] == 1.0);
  const double se = (*c.std)[3] / std::sqrt(1e5);
  CHECK(std::abs(c.losses[3] - 0.421875) <= 3 * se);
}

TEST_CASE("unbiased against the Gaussian theory") {
  std::mt19937_64 gen(5);
  const Spectrum s = [&] {
    const auto r = oracle::random_spectrum(gen, 20);
    return validate_spectrum(r.lambda, r.v2, 0.0);
  }();
  const HyperParams hp{0.1, 4, 200};
  const LearningCurve mc = simulate(FeatureSampler::gaussian(), s, config(hp, 500, 6));
  CHECK(max_z(mc, propagate(s, hp).losses, 500) <= 3.0);

  // Label noise: the loss includes the unlearnable variance.
  const Spectrum noisy = s.with_sigma2(0.5);
  const LearningCurve mn = simulate(FeatureSampler::gaussian(), noisy, config(hp, 500, 7));
  CHECK(max_z(mn, propagate_noisy(noisy, hp).losses, 500) <= 3.0);
}

TEST_CASE("determinism and trial splitting") {
  const Spectrum s = validate_spectrum({1.0, 0.6, 0.2}, {0.5, 1.0, 2.0}, 0.1);
  const RunConfig cfg = config({0.3, 2, 40}, 70, 99);
  const LearningCurve a = simulate(FeatureSampler::gaussian(), s, cfg);
  const LearningCurve b = simulate(FeatureSampler::gaussian(), s, cfg);
  CHECK(a.losses == b.losses);
  CHECK(*a.std == *b.std);

  RunConfig first = config({0.3, 2, 40}, 35, 99), second = first;
  second.first_trial = 35;
  const LearningCurve p = simulate(FeatureSampler::gaussian(), s, first);
  const LearningCurve q = simulate(FeatureSampler::gaussian(), s, second);
  for (std::size_t t = 0; t < a.losses.size(); ++t) {
    CHECK(a.losses[t] == doctest::Approx(0.5 * (p.losses[t] + q.losses[t])).epsilon(1e-12));
  }
}

TEST_CASE("variance decays with batch size") {
  std::mt19937_64 gen(8);
  const auto r = oracle::random_spectrum(gen, 10);
  const Spectrum s = validate_spectrum(r.lambda, r.v2, 0.0);
  double prev = INFINITY;
  for (std::int64_t m : {1, 4, 16}) {
    const LearningCurve c = simulate(FeatureSampler::gaussian(), s, config({0.2, m, 50}, 1000, 9));
    CHECK((*c.std)[50] < prev);
    prev = (*c.std)[50];
  }
}

TEST_CASE("dataset sampler matches the exact fourth-moment theory of its rows") {
  // Rows of a finite dataset are an atomic measure; in the covariance
  // eigenbasis its kappa is exact, so propagate_general is the right mean.
  // Labels lie in the feature span: a residual would add its own fourth-order
  // noise drive, which the noise-free general theory does not model.
  const int points = 30, d = 6;
  Rng r(10);
  Matrix x(points, d);
  for (int i = 0; i < points; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = r.normal() + (j == 0 ? 1.0 : 0.0);
  const Matrix psi = relu_random_features(x, 12, 11);
  Vector wstar(12);
  for (int j = 0; j < 12; ++j) wstar(j) = r.normal();
  const Vector yv = psi * wstar;
  const std::vector<double> y(yv.data(), yv.data() + points);
  const Matrix cov = empirical_covariance(psi);
  const Eigendecomposition e = eigendecompose_covariance(cov);
  std::vector<double> lam, v;
  std::vector<int> keep;
  const Vector py = psi.transpose() * Eigen::Map<const Vector>(y.data(), points) / points;
  for (std::size_t k = 0; k < e.lambda.size(); ++k) {
    if (e.lambda[k] <= 1e-12 * e.lambda[0]) continue;
    keep.push_back(int(k));
    lam.push_back(e.lambda[k]);
    v.push_back(e.basis.col(Eigen::Index(k)).dot(py) / e.lambda[k]);
  }
  Matrix phi(points, Eigen::Index(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) phi.col(Eigen::Index(k)) = psi * e.basis.col(keep[k]);
  const HyperParams hp{0.3 / lam[0], 2, 60};
  const auto exact = propagate_general(lam, v, empirical_kappa(phi), hp).losses;
  const LearningCurve mc = simulate(FeatureSampler::dataset(psi, y), build_spectrum({psi, y}), config(hp, 4000, 12));
  CHECK(mc.losses[0] == doctest::Approx(exact[0]).epsilon(1e-10));
  CHECK(max_z(mc, exact, 4000) <= 4.0);
}

TEST_CASE("multipass") {
  Rng r(13);
  const int m = 20, n = 8;
  Matrix train(m, n);
  std::vector<double> y(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) train(i, j) = r.normal();
    y[i] = train(i, 0) - train(i, 3) + 0.1 * r.normal();
  }
  RunConfig cfg = config({0.05, 4, 30}, 20, 14);
  const MultipassCurves same = simulate_multipass(train, train, y, y, cfg);
  CHECK(same.train.losses == same.test.losses);

  // Full batch is deterministic gradient descent on the training loss.
  cfg.full_batch = true;
  cfg.hp.batch = m;
  const MultipassCurves gd = simulate_multipass(train, train, y, y, cfg);
  CHECK_FALSE(gd.train.std.has_value());
  const Eigen::Map<const Vector> yv(y.data(), m);
  Vector w = Vector::Zero(n);
  for (int t = 0; t <= 30; ++t) {
    const Vector res = train * w - yv;
    CHECK(gd.train.losses[t] == doctest::Approx(res.squaredNorm() / m).epsilon(1e-10));
    w -= (0.05 / m) * train.transpose() * res;
  }
}

TEST_CASE("fixed_compute_empirical") {
  const Spectrum iso = validate_spectrum(std::vector<double>(10, 1.0), std::vector<double>(10, 0.1), 0.0);
  const std::vector<std::int64_t> ms{1, 2, 4, 8};
  const auto rows = fixed_compute_empirical(FeatureSampler::gaussian(), iso, EtaChoice::optimal(),
                                            100, ms, 30, 15);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].loss < rows[3].loss);
  for (const auto& row : rows) CHECK(row.t_used == 100 / row.m);

  const std::vector<std::int64_t> one_step{4};
  const auto c4 = fixed_compute_empirical(FeatureSampler::gaussian(), iso, EtaChoice::fixed(0.1), 4,
                                          one_step, 10, 16);
  CHECK(c4[0].t_used == 1);
}

TEST_CASE("input validation") {
  const Spectrum s = validate_spectrum({1.0}, {1.0}, 0.0);
  CHECK_THROWS_AS(simulate(FeatureSampler::gaussian(), s, config({0.1, 1, 3}, 0, 1)), InputError);
  CHECK_THROWS_AS(FeatureSampler::dataset(Matrix::Ones(3, 2), {1.0, 2.0}), InputError);
}

}
