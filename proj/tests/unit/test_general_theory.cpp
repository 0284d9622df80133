#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sgdcurve/errors.hpp"
#include "sgdcurve/gaussian_theory.hpp"
#include "sgdcurve/general_theory.hpp"
#include "sgdcurve/random.hpp"

using namespace sgdcurve;

namespace {

double rel(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

std::vector<double> sqrt_all(const std::vector<double>& v2) {
  std::vector<double> v;
  for (double x : v2) v.push_back(std::sqrt(x));
  return v;
}

}  // namespace

TEST_SUITE("general-theory") {

TEST_CASE("gaussian_kappa entries") {
  const std::vector<double> one{0.7};
  CHECK(gaussian_kappa(one)(0, 0, 0, 0) == doctest::Approx(3 * 0.49));

  const std::vector<double> two{1.0, 2.0};
  const FourthMomentTensor k = gaussian_kappa(two);
  CHECK(k(0, 0, 1, 1) == doctest::Approx(2.0));
  CHECK(k(0, 1, 0, 1) == doctest::Approx(2.0));
  CHECK(k(0, 1, 1, 0) == doctest::Approx(2.0));
  CHECK(k(1, 1, 1, 1) == doctest::Approx(12.0));
  CHECK(k(0, 1, 0, 0) == 0.0);
}

TEST_CASE("empirical_kappa") {
  Matrix atom = Matrix::Zero(3, 2);
  atom.col(0).setOnes();
  const FourthMomentTensor a = empirical_kappa(atom);
  CHECK(a(0, 0, 0, 0) == 1.0);
  double rest = 0.0;
  for (std::size_t i = 0; i < 16; ++i) rest += std::abs(a.data()[i]);
  CHECK(rest == 1.0);

  // Fourth moments are even, so pooling phi with -phi changes nothing.
  Rng r(3);
  Matrix pooled(200, 2);
  for (int i = 0; i < 100; ++i) {
    pooled(i, 0) = r.normal() + 0.5;
    pooled(i, 1) = r.normal() * pooled(i, 0);
    pooled.row(100 + i) = -pooled.row(i);
  }
  const FourthMomentTensor p = empirical_kappa(pooled);
  const FourthMomentTensor half = empirical_kappa(pooled.topRows(100));
  for (std::size_t i = 0; i < 16; ++i) CHECK(p.data()[i] == doctest::Approx(half.data()[i]).epsilon(1e-13));

  // Gaussian samples agree with the Wick formula entrywise.
  const int n = 1000000;
  const std::vector<double> lam{1.0, 0.5};
  Matrix s(n, 2);
  for (int i = 0; i < n; ++i) {
    s(i, 0) = r.normal();
    s(i, 1) = std::sqrt(0.5) * r.normal();
  }
  const FourthMomentTensor e = empirical_kappa(s), g = gaussian_kappa(lam);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t l = 0; l < 2; ++l) {
          double s2 = 0.0;
          for (int t = 0; t < n; ++t) {
            const double x = s(t, i) * s(t, j) * s(t, k) * s(t, l) - e(i, j, k, l);
            s2 += x * x;
          }
          const double se = std::sqrt(s2 / (n - 1.0) / n);
          CHECK(std::abs(e(i, j, k, l) - g(i, j, k, l)) <= 5 * se + 1e-15);
        }
  // Symmetric under any index permutation.
  CHECK(e(0, 1, 1, 0) == doctest::Approx(e(1, 0, 0, 1)));
  CHECK(e(0, 0, 1, 1) == doctest::Approx(e(1, 0, 1, 0)));
}

TEST_CASE("propagate_general reduces to the Gaussian theory") {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = oracle::random_spectrum(gen, 1 + trial % 16);
    const Spectrum s = validate_spectrum(r.lambda, r.v2, 0.0);
    const HyperParams hp{(0.1 + 0.04 * (trial % 10)) / s.lambda_max(), 1 + trial % 4, 100};
    const auto a = propagate_general(r.lambda, sqrt_all(r.v2), gaussian_kappa(r.lambda), hp).losses;
    const auto b = propagate(s, hp).losses;
    for (int t = 0; t <= 100; ++t) CHECK(rel(a[t], b[t]) < 1e-10);
  }
}

TEST_CASE("propagate_general scalar and edge cases") {
  const std::vector<double> l{1.0}, v{1.0};
  FourthMomentTensor k(1);
  k(0, 0, 0, 0) = 3.0;
  const auto c = propagate_general(l, v, k, {0.5, 1, 4}).losses;
  for (int t = 0; t <= 4; ++t) CHECK(c[t] == doctest::Approx(std::pow(0.75, t)));

  const std::vector<double> l2{1.0, 0.3}, v2{0.5, -2.0};
  const auto flat = propagate_general(l2, v2, gaussian_kappa(l2), {0.0, 1, 5}).losses;
  for (double x : flat) CHECK(x == doctest::Approx(0.25 + 0.3 * 4));

  CHECK_THROWS_AS(propagate_general(l2, v2, gaussian_kappa(l), {0.1, 1, 1}), InputError);
  CHECK_THROWS_AS(propagate_general(l2, v2, gaussian_kappa(l2), {0.1, 1, 1}, 1), InputError);
}

TEST_CASE("property: C stays symmetric") {
  Rng r(11);
  Matrix s(500, 4);
  for (int i = 0; i < 500; ++i)
    for (int j = 0; j < 4; ++j) s(i, j) = (r.uniform() - 0.5) * (j + 1);
  const FourthMomentTensor k = empirical_kappa(s);
  const std::vector<double> lam{1.0, 0.6, 0.3, 0.1}, v{1.0, -0.5, 0.2, 0.7};
  Matrix final;
  propagate_general(lam, v, k, {0.3, 2, 50}, 64, &final);
  CHECK((final - final.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * final.cwiseAbs().maxCoeff());
}

TEST_CASE("regularity_bound_curve") {
  std::mt19937_64 gen(13);
  const auto r = oracle::random_spectrum(gen, 7);
  const Spectrum s = validate_spectrum(r.lambda, r.v2, 0.0);
  const HyperParams hp{0.3, 4, 80};
  CHECK(regularity_bound_curve(s, 1.0, hp).losses == propagate(s, hp).losses);
  const auto two = regularity_bound_curve(s, 2.0, hp).losses;
  const auto half = propagate_with_fluctuation(s, 0.3, 0.09 / 2.0, 80).losses;
  CHECK(two == half);
  const auto zero = regularity_bound_curve(s, 0.0, hp).losses;
  const auto pop = population_curve(s, 0.3, 80).losses;
  for (int t = 0; t <= 80; ++t) CHECK(rel(zero[t], pop[t]) < 1e-12);
}

TEST_CASE("estimate_alpha on Gaussian and bounded features") {
  const std::vector<double> lam{1.0, 0.5, 0.25};
  const AlphaEstimate g = estimate_alpha(gaussian_kappa(lam), lam, 200, 1);
  CHECK(g.probes == 200);
  CHECK(g.alpha == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(g.worst_probe.size() == 3);
  CHECK(probe_violation(gaussian_kappa(lam), lam, 1.0, 200, 1) <= 1e-12);
  CHECK(probe_violation(gaussian_kappa(lam), lam, 0.5, 200, 1) > 0.0);

  // Rademacher features: kappa_iiii = 1 < 3, so alpha < 1 suffices.
  Matrix signs(8, 3);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 3; ++j) signs(i, j) = (i >> j) & 1 ? 1.0 : -1.0;
  const std::vector<double> unit{1.0, 1.0, 1.0};
  const AlphaEstimate rad = estimate_alpha(empirical_kappa(signs), unit, 200, 2);
  CHECK(rad.alpha <= 1.0);
  CHECK(probe_violation(empirical_kappa(signs), unit, rad.alpha, 200, 2) <= 1e-9);
}

TEST_CASE("bound dominates the general curve at the estimated alpha") {
  // Sparse signed features: phi_k = s_k / sqrt(p) with probability p, else 0.
  const double p = 0.25;
  const int n = 3;
  Matrix atoms((1 << n) * (1 << n), n);
  std::vector<double> w;
  int row = 0;
  for (int mask = 0; mask < (1 << n); ++mask)
    for (int sgn = 0; sgn < (1 << n); ++sgn) {
      double weight = 1.0;
      for (int k = 0; k < n; ++k) {
        const bool on = (mask >> k) & 1;
        weight *= on ? p : 1 - p;
        atoms(row, k) = on ? ((sgn >> k) & 1 ? 1.0 : -1.0) / std::sqrt(p) : 0.0;
      }
      w.push_back(weight / (1 << n));
      ++row;
    }
  FourthMomentTensor kappa(n);
  for (int t = 0; t < row; ++t)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l)
            kappa(i, j, k, l) += w[t] * atoms(t, i) * atoms(t, j) * atoms(t, k) * atoms(t, l);
  const std::vector<double> lam{1.0, 1.0, 1.0}, v{1.0, -0.6, 0.4};
  const AlphaEstimate est = estimate_alpha(kappa, lam, 200, 5);
  CHECK(est.alpha == doctest::Approx(1.0 / p - 2.5).epsilon(1e-6));
  const Spectrum s = validate_spectrum(lam, {1.0, 0.36, 0.16}, 0.0);
  const HyperParams hp{0.2, 4, 100};
  const auto general = propagate_general(lam, v, kappa, hp).losses;
  const auto bound = regularity_bound_curve(s, est.alpha, hp).losses;
  for (int t = 0; t <= 100; ++t) CHECK(general[t] <= bound[t] * (1 + 1e-12));
}

}
