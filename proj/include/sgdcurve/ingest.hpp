#pragma once

// From raw samples to spectra: random ReLU embeddings, uncentred second
// moments, and the Spectrum / SplitSpec of a finite dataset.

#include <cstdint>
#include <vector>

#include "sgdcurve/gaussian_theory.hpp"
#include "sgdcurve/spectral.hpp"

namespace sgdcurve {

struct DatasetBundle {
  Matrix features;  // M x N, one sample per row
  std::vector<double> labels;

  void validate() const;
};

// psi(x) = max(0, G x) with G an n_features x d matrix of independent
// Normal(0, 1/d) entries drawn row by row from Rng(seed).
Matrix relu_random_features(const Matrix& x, std::int64_t n_features,
                            std::uint64_t seed);

// (1/M) Psi' Psi, not centred.
Matrix empirical_covariance(const Matrix& psi);

// Spectrum of the empirical measure on the bundle rows. Uses the N x N
// covariance when N <= M and the M x M gram matrix otherwise; the non-zero
// part of the spectrum is the same either way.
Spectrum build_spectrum(const DatasetBundle& bundle);

// Train eigenbasis U from the train covariance; v_k = u_k' <psi y>_train / l_k
// on the non-zero modes and 0 on the null space. The test side is folded in
// exactly: test_proj = U' Sigma_test U, test_bias = test_proj v - U'<psi y>_test
// and test_offset = v' test_proj v - 2 v' U'<psi y>_test + <y^2>_test, so that
// the test mean squared error equals Delta' test_proj Delta + 2 test_bias' Delta
// + test_offset for Delta = U'w - v. train_offset is the part of the train
// labels outside the train feature span.
SplitSpec build_split(const DatasetBundle& train, const DatasetBundle& test);

}  // namespace sgdcurve
