#include "sgdcurve/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <thread>

#include "sgdcurve/errors.hpp"
#include "sgdcurve/kernels.hpp"
#include "sgdcurve/random.hpp"

namespace sgdcurve {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::int64_t kBlockTrials = 32;

// Per-step running mean and sum of squared deviations (Welford), mergeable
// with Chan's pairwise update.
struct StepStats {
  std::vector<double> mean, m2;
  std::int64_t n = 0;

  explicit StepStats(std::size_t width) : mean(width, 0.0), m2(width, 0.0) {}

  void add(const std::vector<double>& x) {
    ++n;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d * inv;
      m2[i] += d * (x[i] - mean[i]);
    }
  }

  void merge(const StepStats& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double nt = na + nb;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = o.mean[i] - mean[i];
      mean[i] += d * (nb / nt);
      m2[i] += o.m2[i] + d * d * (na * nb / nt);
    }
    n += o.n;
  }
};

using TrialFn = std::function<void(std::uint64_t trial, std::vector<double>& out)>;

// Runs trials [0, count) through fn and returns the merged statistics.
// Blocks may run on several threads; the merge is always in block order.
StepStats run_trials(std::int64_t count, std::size_t width, const TrialFn& fn) {
  const std::int64_t blocks = (count + kBlockTrials - 1) / kBlockTrials;
  std::vector<StepStats> partial(static_cast<std::size_t>(blocks), StepStats(width));
  auto work = [&](std::int64_t first_block, std::int64_t stride) {
    std::vector<double> out(width);
    for (std::int64_t b = first_block; b < blocks; b += stride) {
      const std::int64_t lo = b * kBlockTrials;
      const std::int64_t hi = std::min(count, lo + kBlockTrials);
      for (std::int64_t r = lo; r < hi; ++r) {
        fn(static_cast<std::uint64_t>(r), out);
        partial[static_cast<std::size_t>(b)].add(out);
      }
    }
  };
  const std::int64_t workers = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::thread::hardware_concurrency()), 1, blocks);
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::int64_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& th : pool) th.join();
  }
  StepStats total(width);
  for (const auto& p : partial) total.merge(p);
  return total;
}

LearningCurve curve_from(const StepStats& stats, std::size_t offset,
                         std::size_t length, bool with_std) {
  LearningCurve curve;
  curve.losses.assign(stats.mean.begin() + static_cast<std::ptrdiff_t>(offset),
                      stats.mean.begin() + static_cast<std::ptrdiff_t>(offset + length));
  if (with_std) {
    std::vector<double> sd(length, 0.0);
    if (stats.n > 1) {
      const double denom = static_cast<double>(stats.n - 1);
      for (std::size_t i = 0; i < length; ++i) {
        sd[i] = std::sqrt(std::max(0.0, stats.m2[offset + i] / denom));
      }
    }
    curve.std = std::move(sd);
  }
  const double l0 = curve.losses.front();
  for (double l : curve.losses) {
    if (!std::isfinite(l) || (l0 > 0.0 && l > kDivergenceFactor * l0)) {
      curve.diverged = true;
      break;
    }
  }
  return curve;
}

// Mean squared error (1/K) ||z - R a||^2 of a fixed row set, evaluated either
// from the residual or, for tall row sets, from precomputed moments.
class MseEvaluator {
 public:
  MseEvaluator(RowMatrix rows, Vector z) {
    const auto k = static_cast<double>(rows.rows());
    inv_k_ = 1.0 / k;
    if (rows.rows() <= 2 * rows.cols()) {
      rows_ = std::move(rows);
      z_ = std::move(z);
    } else {
      s_ = (rows.transpose() * rows) * inv_k_;
      b_ = (rows.transpose() * z) * inv_k_;
      c_ = z.squaredNorm() * inv_k_;
      moments_ = true;
    }
  }

  double operator()(const Vector& a, Vector& scratch) const {
    if (moments_) {
      scratch.noalias() = s_ * a;
      return std::max(0.0, a.dot(scratch) - 2.0 * b_.dot(a) + c_);
    }
    scratch.noalias() = z_ - rows_ * a;
    return scratch.squaredNorm() * inv_k_;
  }

 private:
  bool moments_ = false;
  double inv_k_ = 0.0;
  RowMatrix rows_;
  Vector z_;
  Matrix s_;
  Vector b_;
  double c_ = 0.0;
};

// Training rows expressed in an orthonormal basis of their row span. SGD from
// w_0 = 0 never leaves that span, so this is an exact change of variables that
// shrinks the state from N to rank(train) coordinates when M < N.
struct ReducedProblem {
  RowMatrix rows;  // M x r
  Vector y;
  Matrix basis;    // N x r, empty when the identity is used
};

ReducedProblem reduce(const Matrix& features, std::span<const double> y) {
  ReducedProblem p;
  const Eigen::Index m = features.rows(), n = features.cols();
  p.y = Eigen::Map<const Vector>(y.data(), m);
  if (m >= n) {
    p.rows = features;
    return p;
  }
  const Matrix gram = features * features.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw InputError("gram eigensolver failed");
  const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = m - 1; k >= 0; --k) {
    if (eig.eigenvalues()(k) > 1e-12 * top) keep.push_back(k);
  }
  const auto r = static_cast<Eigen::Index>(keep.size());
  p.rows.resize(m, std::max<Eigen::Index>(r, 1));
  p.rows.setZero();
  Matrix scaled(m, std::max<Eigen::Index>(r, 1));
  scaled.setZero();
  for (Eigen::Index j = 0; j < r; ++j) {
    const double s = std::sqrt(eig.eigenvalues()(keep[static_cast<std::size_t>(j)]));
    const auto e = eig.eigenvectors().col(keep[static_cast<std::size_t>(j)]);
    p.rows.col(j) = e * s;
    scaled.col(j) = e / s;
  }
  p.basis = features.transpose() * scaled;  // N x r, orthonormal columns
  return p;
}

RowMatrix project(const Matrix& features, const ReducedProblem& p) {
  if (p.basis.size() == 0) return features;
  return features * p.basis;
}

void check_dataset(const Matrix& x, std::span<const double> y, const char* what) {
  if (x.rows() == 0 || x.cols() == 0) {
    throw InputError(std::string(what) + ": empty feature matrix");
  }
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) {
    throw InputError(std::string(what) + ": " + std::to_string(x.rows()) +
                     " rows but " + std::to_string(y.size()) + " labels");
  }
  if (!x.allFinite()) throw InputError(std::string(what) + ": non-finite feature");
}

// Shared dataset runner. test may be null (train curve only).
MultipassCurves run_dataset(const Matrix& train_x, std::span<const double> train_y,
                            const Matrix* test_x, std::span<const double> test_y,
                            const RunConfig& cfg) {
  const ReducedProblem p = reduce(train_x, train_y);
  const MseEvaluator train_eval(p.rows, p.y);
  std::optional<MseEvaluator> test_eval;
  if (test_x != nullptr) {
    test_eval.emplace(project(*test_x, p),
                      Eigen::Map<const Vector>(test_y.data(), test_x->rows()));
  }
  const std::size_t len = static_cast<std::size_t>(cfg.hp.steps) + 1;
  const std::size_t series = test_x != nullptr ? 2 : 1;
  const Eigen::Index r = p.rows.cols();
  const auto rows_m = static_cast<std::uint64_t>(p.rows.rows());
  const double eta = cfg.hp.eta;
  const std::int64_t batch = cfg.hp.batch;
  const double step_scale = eta / static_cast<double>(batch);
  const double noise_sd = std::sqrt(cfg.noise_sigma2);
  const double noise_var = cfg.noise_sigma2;
  const auto& kt = kernels::active();

  auto record = [&](const Vector& a, Vector& scratch, std::vector<double>& out,
                    std::size_t t) {
    out[t] = train_eval(a, scratch) + noise_var;
    if (test_eval) out[len + t] = (*test_eval)(a, scratch) + noise_var;
  };

  if (cfg.full_batch) {
    const Matrix s = (p.rows.transpose() * p.rows) / static_cast<double>(p.rows.rows());
    const Vector b = (p.rows.transpose() * p.y) / static_cast<double>(p.rows.rows());
    Vector a = Vector::Zero(r), scratch;
    std::vector<double> out(series * len);
    record(a, scratch, out, 0);
    for (std::size_t t = 1; t < len; ++t) {
      a += eta * (b - s * a);
      record(a, scratch, out, t);
    }
    StepStats one(series * len);
    one.add(out);
    MultipassCurves res;
    res.train = curve_from(one, 0, len, false);
    if (test_eval) res.test = curve_from(one, len, len, false);
    return res;
  }

  const TrialFn fn = [&](std::uint64_t trial, std::vector<double>& out) {
    Rng rng = Rng::substream(cfg.base_seed, cfg.first_trial + trial);
    Vector a = Vector::Zero(r), grad(r), scratch;
    record(a, scratch, out, 0);
    for (std::size_t t = 1; t < len; ++t) {
      grad.setZero();
      for (std::int64_t mu = 0; mu < batch; ++mu) {
        const auto idx = static_cast<Eigen::Index>(rng.below(rows_m));
        const double* row = p.rows.row(idx).data();
        double label = p.y(idx);
        if (noise_sd > 0.0) label += noise_sd * rng.normal();
        const double e = label - kt.dot(row, a.data(), static_cast<std::size_t>(r));
        kt.axpy(e, row, grad.data(), static_cast<std::size_t>(r));
      }
      kt.axpy(step_scale, grad.data(), a.data(), static_cast<std::size_t>(r));
      record(a, scratch, out, t);
    }
  };
  const StepStats stats = run_trials(cfg.trials, series * len, fn);
  MultipassCurves res;
  res.train = curve_from(stats, 0, len, true);
  if (test_eval) res.test = curve_from(stats, len, len, true);
  return res;
}

}  // namespace

FeatureSampler FeatureSampler::gaussian() { return FeatureSampler(); }

FeatureSampler FeatureSampler::dataset(Matrix features, std::vector<double> labels) {
  check_dataset(features, labels, "dataset sampler");
  FeatureSampler s;
  s.kind_ = Kind::dataset;
  s.features_ = std::make_shared<const Matrix>(std::move(features));
  s.labels_ = std::make_shared<const std::vector<double>>(std::move(labels));
  return s;
}

void RunConfig::validate() const {
  hp.validate();
  if (trials < 1) throw InputError("trial count must be >= 1");
  if (!(noise_sigma2 >= 0.0) || !std::isfinite(noise_sigma2)) {
    throw InputError("noise variance must be finite and >= 0");
  }
}

LearningCurve simulate(const FeatureSampler& sampler, const Spectrum& spec,
                       const RunConfig& cfg) {
  cfg.validate();
  if (sampler.kind() == FeatureSampler::Kind::dataset) {
    return run_dataset(sampler.features(), sampler.labels(), nullptr, {}, cfg).train;
  }

  const std::size_t n = spec.size();
  const auto lambda = spec.lambda();
  std::vector<double> sqrt_lambda(n), delta0(n);
  for (std::size_t k = 0; k < n; ++k) {
    sqrt_lambda[k] = std::sqrt(lambda[k]);
    delta0[k] = -std::sqrt(spec.v2()[k]);
  }
  const double noise_var = spec.sigma2() + cfg.noise_sigma2;
  const double noise_sd = std::sqrt(noise_var);
  const std::size_t len = static_cast<std::size_t>(cfg.hp.steps) + 1;
  const std::int64_t batch = cfg.hp.batch;
  const double step_scale = -cfg.hp.eta / static_cast<double>(batch);
  const auto& kt = kernels::active();

  const TrialFn fn = [&](std::uint64_t trial, std::vector<double>& out) {
    Rng rng = Rng::substream(cfg.base_seed, cfg.first_trial + trial);
    std::vector<double> delta = delta0, phi(n), grad(n);
    out[0] = kt.weighted_sumsq(lambda.data(), delta.data(), n) + noise_var;
    for (std::size_t t = 1; t < len; ++t) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::int64_t mu = 0; mu < batch; ++mu) {
        for (std::size_t k = 0; k < n; ++k) phi[k] = sqrt_lambda[k] * rng.normal();
        // w . phi - y = Delta . phi - eps
        double e = kt.dot(phi.data(), delta.data(), n);
        if (noise_sd > 0.0) e -= noise_sd * rng.normal();
        kt.axpy(e, phi.data(), grad.data(), n);
      }
      kt.axpy(step_scale, grad.data(), delta.data(), n);
      out[t] = kt.weighted_sumsq(lambda.data(), delta.data(), n) + noise_var;
    }
  };
  const StepStats stats = run_trials(cfg.trials, len, fn);
  return curve_from(stats, 0, len, true);
}

MultipassCurves simulate_multipass(const Matrix& train_features,
                                   const Matrix& test_features,
                                   std::span<const double> y_train,
                                   std::span<const double> y_test,
                                   const RunConfig& cfg) {
  cfg.validate();
  check_dataset(train_features, y_train, "train set");
  check_dataset(test_features, y_test, "test set");
  if (train_features.cols() != test_features.cols()) {
    throw InputError("train and test feature dimensions differ");
  }
  return run_dataset(train_features, y_train, &test_features, y_test, cfg);
}

std::vector<EmpiricalScanRow> fixed_compute_empirical(
    const FeatureSampler& sampler, const Spectrum& spec, const EtaChoice& eta,
    std::int64_t compute, std::span<const std::int64_t> m_values,
    std::int64_t trials, std::uint64_t base_seed) {
  const std::vector<ScanRow> theory = fixed_compute_scan(spec, eta, compute, m_values);
  std::vector<EmpiricalScanRow> rows;
  rows.reserve(theory.size());
  for (const ScanRow& th : theory) {
    RunConfig cfg;
    cfg.hp = {th.eta, th.m, th.t_used};
    cfg.trials = trials;
    cfg.base_seed = substream_seed(base_seed, static_cast<std::uint64_t>(th.m));
    const LearningCurve c = simulate(sampler, spec, cfg);
    EmpiricalScanRow row;
    row.m = th.m;
    row.t_used = th.t_used;
    row.eta = th.eta;
    row.loss = c.final_loss();
    row.std = c.std->back();
    row.diverged = c.diverged;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sgdcurve
