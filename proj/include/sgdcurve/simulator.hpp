#pragma once

// Monte Carlo SGD. Runs the plain minibatch update
//   w_{t+1} = w_t - (eta/m) sum_mu psi_mu (w_t . psi_mu - y_mu)
// from w_0 = 0 over many independent trials and reports the across-trial mean
// and sample standard deviation of the loss at every step.
//
// Trial r draws from Rng::substream(base_seed, r), and trials are folded into
// fixed-size blocks whose statistics are merged in block order, so output
// depends only on (config, seed) and not on thread count.

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sgdcurve/curve.hpp"
#include "sgdcurve/gaussian_theory.hpp"
#include "sgdcurve/spectral.hpp"

namespace sgdcurve {

class FeatureSampler {
 public:
  enum class Kind { gaussian, dataset };

  // phi_k ~ Normal(0, lambda_k) independently, in the covariance eigenbasis.
  // Targets are y = w* . phi + eps with w* = -Delta_0 taken from the spectrum.
  static FeatureSampler gaussian();

  // Rows of `features` drawn uniformly with replacement, paired with labels.
  static FeatureSampler dataset(Matrix features, std::vector<double> labels);

  Kind kind() const { return kind_; }
  const Matrix& features() const { return *features_; }
  std::span<const double> labels() const { return *labels_; }

 private:
  Kind kind_ = Kind::gaussian;
  std::shared_ptr<const Matrix> features_;
  std::shared_ptr<const std::vector<double>> labels_;
};

struct RunConfig {
  HyperParams hp;
  std::int64_t trials = 1;
  std::uint64_t base_seed = 0;
  double noise_sigma2 = 0.0;      // extra label noise, fresh per sample
  std::uint64_t first_trial = 0;  // substream index of trial 0
  bool full_batch = false;        // multipass only: deterministic gradient descent

  void validate() const;
};

// Gaussian sampler: Delta_0 = -sqrt(v2) per mode and
// L_t = sum_k lambda_k Delta_k^2 + sigma2 + noise_sigma2, evaluated exactly.
// Label noise has variance sigma2 + noise_sigma2, so spec.sigma2() stands in
// for the unlearnable target component.
// Dataset sampler: spec is ignored; L_t is the mean squared error over every
// row of the dataset, plus noise_sigma2.
LearningCurve simulate(const FeatureSampler& sampler, const Spectrum& spec,
                       const RunConfig& cfg);

struct MultipassCurves {
  LearningCurve train;
  LearningCurve test;
};

// Minibatches drawn with replacement from the M training rows. Train and test
// losses are mean squared errors over all training and all test rows. With
// cfg.full_batch the run is plain gradient descent on the training loss, a
// single deterministic trajectory with no std.
MultipassCurves simulate_multipass(const Matrix& train_features,
                                   const Matrix& test_features,
                                   std::span<const double> y_train,
                                   std::span<const double> y_test,
                                   const RunConfig& cfg);

struct EmpiricalScanRow {
  std::int64_t m = 0;
  std::int64_t t_used = 0;
  double eta = 0.0;
  double loss = 0.0;
  double std = 0.0;
  bool diverged = false;
};

// Empirical fixed-compute scan: for each m, `trials` runs of floor(C/m) steps.
// Learning rates are resolved from the theory exactly as in fixed_compute_scan.
// Batch size m uses seeds derived from (base_seed, m).
std::vector<EmpiricalScanRow> fixed_compute_empirical(
    const FeatureSampler& sampler, const Spectrum& spec, const EtaChoice& eta,
    std::int64_t compute, std::span<const std::int64_t> m_values,
    std::int64_t trials, std::uint64_t base_seed);

}  // namespace sgdcurve
