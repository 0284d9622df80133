// sgdcurve: command-line front end. Every subcommand writes CSV or JSON to
// --output (stdout when omitted) and, when writing to files, a manifest
// <output stem>.manifest.json from which `sgdcurve replay` reproduces the
// outputs byte for byte.
//
// Exit codes: 0 ok, 2 usage or input error, 3 a curve diverged (still written).

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sgdcurve/errors.hpp"
#include "sgdcurve/gaussian_theory.hpp"
#include "sgdcurve/general_theory.hpp"
#include "sgdcurve/ingest.hpp"
#include "sgdcurve/io.hpp"
#include "sgdcurve/kernels.hpp"
#include "sgdcurve/powerlaw.hpp"
#include "sgdcurve/random.hpp"
#include "sgdcurve/simulator.hpp"
#include "sgdcurve/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sgdcurve;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

struct Options {
  std::string isa = "auto";
  std::string output = "-";
  std::optional<std::uint64_t> seed;

  std::string spectrum;
  double eta = 0.0;
  std::int64_t batch = 1;
  std::int64_t steps = 0;
  bool noisy = false;

  std::int64_t trials = 100;
  double noise_sigma2 = 0.0;
  std::string train, test;
  bool full_batch = false;

  bool eta_optimal = false;
  bool eta_heuristic = false;
  std::int64_t compute = 0;
  std::string batches;
  bool empirical = false;

  std::optional<double> hyper_eta;
  std::optional<std::int64_t> hyper_batch;

  std::string features, labels, format = "csv";
  std::int64_t relu_dim = 0;
  std::string save_bundle;

  double a = 2.5, b = 1.0;
  std::int64_t n_modes = 10000;
  std::vector<std::int64_t> t_window;

  std::string kappa, samples;
  std::optional<double> alpha;
  std::size_t max_modes = kDefaultGeneralMaxModes;

  std::string manifest;
};

// Outcome of one subcommand, collected for the manifest.
struct RunRecord {
  std::vector<std::string> outputs;
  bool diverged = false;
  std::optional<std::uint64_t> seed;
};

bool to_stdout(const Options& o) { return o.output == "-"; }

void emit_text(const Options& o, const std::string& text, RunRecord& rec) {
  if (to_stdout(o)) {
    std::cout << text;
    return;
  }
  io::write_file_atomic(o.output, text);
  rec.outputs.push_back(o.output);
}

void emit_curve(const Options& o, const LearningCurve& c, RunRecord& rec) {
  if (to_stdout(o)) {
    const fs::path tmp = fs::temp_directory_path() /
                         ("sgdcurve-" + std::to_string(::getpid()) + ".csv");
    io::write_curve(tmp, c);
    std::cout << io::read_file(tmp);
    fs::remove(tmp);
  } else {
    io::write_curve(o.output, c);
    rec.outputs.push_back(o.output);
  }
  rec.diverged = rec.diverged || c.diverged;
}

// <stem>.<tag>.csv next to --output; --output is required.
fs::path tagged(const Options& o, const std::string& tag) {
  if (to_stdout(o)) throw InputError("this subcommand writes two files; pass --output");
  fs::path p(o.output);
  return p.replace_extension("." + tag + ".csv");
}

std::vector<std::int64_t> parse_batches(const std::string& spec) {
  std::vector<std::int64_t> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    try {
      if (dash != std::string::npos && dash > 0) {
        const std::int64_t lo = std::stoll(item.substr(0, dash));
        const std::int64_t hi = std::stoll(item.substr(dash + 1));
        if (lo > hi) throw InputError("empty batch range " + item);
        for (std::int64_t m = lo; m <= hi; ++m) out.push_back(m);
      } else {
        std::size_t used = 0;
        out.push_back(std::stoll(item, &used));
        if (used != item.size()) throw InputError("bad batch size " + item);
      }
    } catch (const std::logic_error&) {
      throw InputError("bad batch list '" + spec + "'");
    }
  }
  if (out.empty()) throw InputError("--batches is empty");
  return out;
}

std::uint64_t resolve_seed(const Options& o, RunRecord& rec) {
  std::uint64_t s;
  if (o.seed) {
    s = *o.seed;
  } else {
    std::random_device rd;
    s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  rec.seed = s;
  return s;
}

void cmd_theory(const Options& o, RunRecord& rec) {
  const Spectrum spec = io::load_spectrum(o.spectrum);
  const HyperParams hp{o.eta, o.batch, o.steps};
  if (!o.noisy && spec.sigma2() != 0.0) {
    throw InputError("spectrum has sigma2 > 0; pass --noisy");
  }
  emit_curve(o, o.noisy ? propagate_noisy(spec, hp) : propagate(spec, hp), rec);
}

void cmd_simulate(const Options& o, RunRecord& rec) {
  RunConfig cfg;
  cfg.hp = {o.eta, o.batch, o.steps};
  cfg.trials = o.trials;
  cfg.noise_sigma2 = o.noise_sigma2;
  cfg.full_batch = o.full_batch;
  cfg.base_seed = resolve_seed(o, rec);

  if (!o.train.empty()) {
    const DatasetBundle train = io::load_bundle(o.train);
    if (o.test.empty()) {
      if (o.full_batch) {
        const auto res = simulate_multipass(train.features, train.features,
                                            train.labels, train.labels, cfg);
        emit_curve(o, res.train, rec);
        return;
      }
      const FeatureSampler s = FeatureSampler::dataset(train.features, train.labels);
      emit_curve(o, simulate(s, validate_spectrum({1.0}, {0.0}, 0.0), cfg), rec);
      return;
    }
    const DatasetBundle test = io::load_bundle(o.test);
    const auto res = simulate_multipass(train.features, test.features, train.labels,
                                        test.labels, cfg);
    const fs::path tr = tagged(o, "train"), te = tagged(o, "test");
    io::write_curve(tr, res.train);
    io::write_curve(te, res.test);
    rec.outputs.push_back(tr.string());
    rec.outputs.push_back(te.string());
    rec.diverged = res.train.diverged || res.test.diverged;
    return;
  }
  if (o.spectrum.empty()) throw InputError("simulate needs a spectrum file or --train");
  if (o.full_batch) throw InputError("--full-batch applies to dataset mode only");
  const Spectrum spec = io::load_spectrum(o.spectrum);
  emit_curve(o, simulate(FeatureSampler::gaussian(), spec, cfg), rec);
}

EtaChoice eta_choice(const Options& o) {
  const int picked = (o.eta > 0.0) + o.eta_optimal + o.eta_heuristic;
  if (picked != 1) {
    throw InputError("pass exactly one of --eta, --eta-optimal, --eta-heuristic");
  }
  if (o.eta_optimal) return EtaChoice::optimal();
  if (o.eta_heuristic) return EtaChoice::heuristic();
  return EtaChoice::fixed(o.eta);
}

void cmd_scan(const Options& o, RunRecord& rec) {
  const Spectrum spec = io::load_spectrum(o.spectrum);
  const std::vector<std::int64_t> ms = parse_batches(o.batches);
  const EtaChoice choice = eta_choice(o);
  const fs::path tmp = fs::temp_directory_path() /
                       ("sgdcurve-scan-" + std::to_string(::getpid()) + ".csv");
  const fs::path target = to_stdout(o) ? tmp : fs::path(o.output);
  if (o.empirical) {
    const auto rows = fixed_compute_empirical(FeatureSampler::gaussian(), spec, choice,
                                              o.compute, ms, o.trials,
                                              resolve_seed(o, rec));
    io::write_scan(target, rows);
    for (const auto& r : rows) rec.diverged = rec.diverged || r.diverged;
  } else {
    const auto rows = fixed_compute_scan(spec, choice, o.compute, ms);
    io::write_scan(target, rows);
    for (const auto& r : rows) rec.diverged = rec.diverged || r.diverged;
  }
  if (to_stdout(o)) {
    std::cout << io::read_file(tmp);
    fs::remove(tmp);
  } else {
    rec.outputs.push_back(o.output);
  }
}

void cmd_hyper(const Options& o, RunRecord& rec) {
  const Spectrum spec = io::load_spectrum(o.spectrum);
  if (!o.hyper_eta && !o.hyper_batch) throw InputError("hyper needs --eta or --batch");
  json j;
  j["lambda_max"] = spec.lambda_max();
  j["lambda_norm2_normalized"] = spec.lambda_norm2() / (spec.lambda_max() * spec.lambda_max());
  if (o.hyper_eta) {
    j["eta"] = *o.hyper_eta;
    j["m_min"] = stability_min_batch(*o.hyper_eta, spec.lambda());
    const OptimalBatch ob = heuristic_optimal_batch(*o.hyper_eta, spec.lambda());
    j["m_star"] = ob.m_star;
    j["m_star_int"] = ob.m_star_int;
  }
  if (o.hyper_batch) {
    if (*o.hyper_batch < 1) throw InputError("--batch must be >= 1");
    j["batch"] = *o.hyper_batch;
    j["eta_star"] = heuristic_optimal_eta(*o.hyper_batch, spec.lambda());
    j["eta_max"] = stability_max_eta(static_cast<double>(*o.hyper_batch), spec.lambda());
  }
  emit_text(o, j.dump(2) + "\n", rec);
}

void cmd_ingest(const Options& o, RunRecord& rec) {
  const io::MatrixFormat f = io::parse_format(o.format);
  DatasetBundle bundle;
  bundle.features = io::load_matrix(o.features, f);
  bundle.labels = io::load_vector(o.labels, f);
  bundle.validate();
  if (o.relu_dim > 0) {
    bundle.features = relu_random_features(bundle.features, o.relu_dim, resolve_seed(o, rec));
  }
  const Spectrum spec = build_spectrum(bundle);
  if (to_stdout(o)) {
    std::cout << "k,lambda,v2\n";
    for (std::size_t k = 0; k < spec.size(); ++k) {
      std::cout << k + 1 << ',' << io::format_double(spec.lambda()[k]) << ','
                << io::format_double(spec.v2()[k]) << '\n';
    }
    std::cerr << "sigma2 " << io::format_double(spec.sigma2()) << '\n';
  } else {
    io::write_spectrum(o.output, spec);
    rec.outputs.push_back(o.output);
    rec.outputs.push_back(io::sidecar_path(o.output).string());
  }
  if (!o.save_bundle.empty()) {
    const fs::path manifest(o.save_bundle);
    fs::path feat = manifest, lab = manifest;
    feat.replace_extension(".features.bin");
    lab.replace_extension(".labels.bin");
    io::write_matrix(feat, bundle.features, io::MatrixFormat::f64le);
    io::write_vector(lab, bundle.labels, io::MatrixFormat::f64le);
    io::write_bundle_manifest(manifest, feat.filename(), lab.filename(),
                              io::MatrixFormat::f64le);
    for (const fs::path& p : {feat, io::sidecar_path(feat), lab, io::sidecar_path(lab), manifest}) {
      rec.outputs.push_back(p.string());
    }
  }
}

void cmd_scaling(const Options& o, RunRecord& rec) {
  if (o.t_window.size() != 2) throw InputError("--t-window takes two values");
  const PowerLawParams p{o.a, o.b, o.n_modes};
  const ScalingReport r = scaling_check(p, o.eta, o.batch, o.t_window[0], o.t_window[1]);
  if (!r.regime_ok) {
    std::cerr << "warning: eta^2 |lambda|^2 / m is not small against 2 eta lambda_1; "
                 "fluctuations may bias the exponent\n";
  }
  json j;
  j["a"] = p.a;
  j["b"] = p.b;
  j["n_modes"] = p.n_modes;
  j["eta"] = o.eta;
  j["batch"] = o.batch;
  j["beta_fit"] = r.beta_fit;
  j["beta_predicted"] = r.beta_predicted;
  j["relative_gap"] = r.relative_gap;
  j["regime_ok"] = r.regime_ok;
  j["fit"] = json::parse(io::fit_report_json(r.fit));
  emit_text(o, j.dump(2) + "\n", rec);
}

void cmd_split(const Options& o, RunRecord& rec) {
  const DatasetBundle train = io::load_bundle(o.train);
  const DatasetBundle test = io::load_bundle(o.test);
  const SplitCurves c = split_curves(build_split(train, test), {o.eta, o.batch, o.steps});
  const fs::path tr = tagged(o, "train"), te = tagged(o, "test");
  io::write_curve(tr, c.train);
  io::write_curve(te, c.test);
  rec.outputs.push_back(tr.string());
  rec.outputs.push_back(te.string());
  rec.diverged = c.train.diverged || c.test.diverged;
}

void cmd_general(const Options& o, RunRecord& rec) {
  const Spectrum spec = io::load_spectrum(o.spectrum);
  const HyperParams hp{o.eta, o.batch, o.steps};
  if (o.alpha) {
    emit_curve(o, regularity_bound_curve(spec, *o.alpha, hp), rec);
    return;
  }
  if (!o.kappa.empty() && !o.samples.empty()) {
    throw InputError("pass at most one of --kappa and --samples");
  }
  FourthMomentTensor kappa;
  if (!o.kappa.empty()) {
    kappa = io::load_kappa(o.kappa);
  } else if (!o.samples.empty()) {
    kappa = empirical_kappa(io::load_matrix(o.samples, io::parse_format(o.format)));
  } else {
    kappa = gaussian_kappa(spec.lambda());
  }
  std::vector<double> v(spec.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::sqrt(spec.v2()[k]);
  emit_curve(o, propagate_general(spec.lambda(), v, kappa, hp, o.max_modes), rec);
}

int run(std::vector<std::string> args, bool allow_replay);

fs::path manifest_path(const std::string& output) {
  fs::path p(output);
  return p.replace_extension(".manifest.json");
}

void write_manifest(const Options& o, const std::string& sub,
                    std::vector<std::string> args, const RunRecord& rec) {
  if (to_stdout(o)) return;
  // Pin everything that was left to chance so a replay cannot differ.
  if (rec.seed && !o.seed) {
    args.push_back("--seed");
    args.push_back(std::to_string(*rec.seed));
  }
  if (std::find(args.begin(), args.end(), "--isa") == args.end()) {
    args.push_back("--isa");
    args.push_back(kernels::active().name);
  }
  json j;
  j["tool"] = "sgdcurve";
  j["version"] = kVersion;
  j["subcommand"] = sub;
  j["args"] = args;
  j["cwd"] = fs::current_path().string();
  j["rng"] = kRngName;
  j["kernels"] = kernels::active().name;
  if (rec.seed) j["seed"] = *rec.seed;
  j["outputs"] = rec.outputs;
  j["diverged"] = rec.diverged;
  io::write_file_atomic(manifest_path(o.output), j.dump(2) + "\n");
}

int cmd_replay(const Options& o) {
  json j;
  try {
    j = json::parse(io::read_file(o.manifest));
  } catch (const json::exception& e) {
    throw InputError(o.manifest + ": invalid JSON: " + e.what());
  }
  if (!j.contains("args") || !j["args"].is_array()) {
    throw InputError(o.manifest + ": no recorded arguments");
  }
  if (j.contains("version") && j["version"] != kVersion) {
    std::cerr << "warning: manifest written by version " << j["version"].get<std::string>()
              << ", replaying with " << kVersion << '\n';
  }
  const auto args = j["args"].get<std::vector<std::string>>();
  const fs::path old = fs::current_path();
  if (j.contains("cwd")) fs::current_path(j["cwd"].get<std::string>());
  const int code = run(args, false);
  fs::current_path(old);
  return code;
}

void add_hp(CLI::App* c, Options& o, bool steps) {
  c->add_option("--eta", o.eta, "learning rate")->required()->check(CLI::NonNegativeNumber);
  c->add_option("--batch", o.batch, "minibatch size")->check(CLI::PositiveNumber);
  if (steps) c->add_option("--steps", o.steps, "number of SGD steps")->required()->check(CLI::NonNegativeNumber);
}

int run(std::vector<std::string> args, bool allow_replay) {
  Options o;
  CLI::App app{"Expected SGD learning curves from feature spectra"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--isa", o.isa, "kernel variant: auto, scalar or avx2");
  app.add_option("-o,--output", o.output, "output path ('-' for stdout)");

  auto* theory = app.add_subcommand("theory", "exact Gaussian-feature learning curve");
  theory->add_option("spectrum", o.spectrum, "spectrum CSV")->required();
  add_hp(theory, o, true);
  theory->add_flag("--noisy", o.noisy, "include the unlearnable variance sigma2");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo SGD");
  sim->add_option("spectrum", o.spectrum, "spectrum CSV (Gaussian features)");
  add_hp(sim, o, true);
  sim->add_option("--trials", o.trials, "independent runs")->check(CLI::PositiveNumber);
  sim->add_option("--seed", o.seed, "base seed (random and recorded if omitted)");
  sim->add_option("--noise-sigma2", o.noise_sigma2, "extra label-noise variance");
  sim->add_option("--train", o.train, "training bundle manifest (dataset mode)");
  sim->add_option("--test", o.test, "test bundle manifest (multipass mode)");
  sim->add_flag("--full-batch", o.full_batch, "deterministic gradient descent on --train");

  auto* scan = app.add_subcommand("scan-batch", "final loss across batch sizes at fixed compute");
  scan->add_option("spectrum", o.spectrum, "spectrum CSV")->required();
  scan->add_option("--eta", o.eta, "fixed learning rate");
  scan->add_flag("--eta-optimal", o.eta_optimal, "best learning rate per batch size");
  scan->add_flag("--eta-heuristic", o.eta_heuristic, "m / (m + |lambda|^2) per batch size");
  scan->add_option("--compute", o.compute, "budget C = t m")->required()->check(CLI::PositiveNumber);
  scan->add_option("--batches", o.batches, "e.g. 1,2,4 or 1-32")->required();
  scan->add_flag("--empirical", o.empirical, "simulate instead of theory");
  scan->add_option("--trials", o.trials, "runs per batch size (with --empirical)")->check(CLI::PositiveNumber);
  scan->add_option("--seed", o.seed, "base seed (with --empirical)");

  auto* hyper = app.add_subcommand("hyper", "stability limits and heuristic hyperparameters");
  hyper->add_option("spectrum", o.spectrum, "spectrum CSV")->required();
  hyper->add_option("--eta", o.hyper_eta, "learning rate");
  hyper->add_option("--batch", o.hyper_batch, "batch size");

  auto* ingest = app.add_subcommand("ingest", "spectrum of a dataset");
  ingest->add_option("--features", o.features, "M x d feature matrix")->required();
  ingest->add_option("--labels", o.labels, "M labels")->required();
  ingest->add_option("--format", o.format, "csv or f64le");
  ingest->add_option("--relu-dim", o.relu_dim, "embed with N random ReLU features");
  ingest->add_option("--seed", o.seed, "seed for the random embedding");
  ingest->add_option("--save-bundle", o.save_bundle, "also write the embedded dataset bundle");

  auto* scaling = app.add_subcommand("scaling", "power-law exponent check");
  scaling->add_option("--a", o.a, "task exponent")->required();
  scaling->add_option("--b", o.b, "feature exponent")->required();
  scaling->add_option("--n-modes", o.n_modes, "number of modes");
  scaling->add_option("--eta", o.eta, "learning rate")->required();
  scaling->add_option("--batch", o.batch, "batch size")->check(CLI::PositiveNumber);
  scaling->add_option("--t-window", o.t_window, "fit window t_lo t_hi")->expected(2)->required();

  auto* split = app.add_subcommand("split", "train and test curves for a finite training set");
  split->add_option("--train", o.train, "training bundle manifest")->required();
  split->add_option("--test", o.test, "test bundle manifest")->required();
  add_hp(split, o, true);

  auto* general = app.add_subcommand("general", "fourth-moment propagation");
  general->add_option("spectrum", o.spectrum, "spectrum CSV")->required();
  add_hp(general, o, true);
  general->add_option("--kappa", o.kappa, "fourth-moment tensor (f64le)");
  general->add_option("--samples", o.samples, "T x N eigenbasis feature samples");
  general->add_option("--format", o.format, "format of --samples");
  general->add_option("--alpha", o.alpha, "emit the regularity bound at this alpha");
  general->add_option("--max-modes", o.max_modes, "refuse spectra larger than this");

  CLI::App* replay = nullptr;
  if (allow_replay) {
    replay = app.add_subcommand("replay", "re-run a manifest");
    replay->add_option("manifest", o.manifest, "manifest JSON")->required();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!kernels::select(o.isa)) throw InputError("unknown or unsupported --isa " + o.isa);
    if (replay != nullptr && replay->parsed()) return cmd_replay(o);

    RunRecord rec;
    std::string name;
    for (auto* sub : app.get_subcommands()) name = sub->get_name();
    if (name == "theory") cmd_theory(o, rec);
    else if (name == "simulate") cmd_simulate(o, rec);
    else if (name == "scan-batch") cmd_scan(o, rec);
    else if (name == "hyper") cmd_hyper(o, rec);
    else if (name == "ingest") cmd_ingest(o, rec);
    else if (name == "scaling") cmd_scaling(o, rec);
    else if (name == "split") cmd_split(o, rec);
    else if (name == "general") cmd_general(o, rec);
    write_manifest(o, name, args, rec);
    if (rec.diverged) {
      std::cerr << "warning: loss diverged (exceeded " << kDivergenceFactor << " x L_0)\n";
      return kExitDiverged;
    }
    return kExitOk;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const UnstableError& e) {
    std::cerr << "error: " << e.what() << '\n';
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  return run(std::vector<std::string>(argv + 1, argv + argc), true);
}
