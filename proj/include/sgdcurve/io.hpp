#pragma once

// File formats. Every writer goes through a temporary file in the target
// directory followed by a rename, so readers never see a partial file.
//
//   spectrum   CSV "k,lambda,v2" (k from 1) + <stem>.meta.json {"sigma2","n_modes"}
//   curve      CSV "t,loss" or "t,loss,std" (t from 0)
//   scan       CSV "m,t_used,loss" (empirical scans add ",std")
//   matrix     CSV (optional single header row) or raw f64le row-major with
//              <stem>.meta.json {"rows","cols"}
//   kappa      raw f64le in (i,j,k,l) row-major order + <stem>.meta.json {"n"}
//   bundle     JSON {"features": path, "labels": path, "format": "csv"|"f64le"}
//
// Numbers are printed with 17 significant digits, enough to round-trip any
// double.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sgdcurve/curve.hpp"
#include "sgdcurve/gaussian_theory.hpp"
#include "sgdcurve/general_theory.hpp"
#include "sgdcurve/ingest.hpp"
#include "sgdcurve/powerlaw.hpp"
#include "sgdcurve/simulator.hpp"
#include "sgdcurve/spectral.hpp"

namespace sgdcurve::io {

namespace fs = std::filesystem;

enum class MatrixFormat { csv, f64le };

MatrixFormat parse_format(std::string_view name);
const char* format_name(MatrixFormat f);

std::string format_double(double x);

// <dir>/<stem>.meta.json for <dir>/<stem>.<ext>
fs::path sidecar_path(const fs::path& path);

void write_file_atomic(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

Matrix load_matrix(const fs::path& path, MatrixFormat format);
void write_matrix(const fs::path& path, const Matrix& m, MatrixFormat format);

// A matrix with a single row or a single column, flattened.
std::vector<double> load_vector(const fs::path& path, MatrixFormat format);
void write_vector(const fs::path& path, const std::vector<double>& v,
                  MatrixFormat format);

Spectrum load_spectrum(const fs::path& path);
void write_spectrum(const fs::path& path, const Spectrum& spec);

void write_curve(const fs::path& path, const LearningCurve& curve);
LearningCurve load_curve(const fs::path& path);

void write_scan(const fs::path& path, const std::vector<ScanRow>& rows);
void write_scan(const fs::path& path, const std::vector<EmpiricalScanRow>& rows);

FourthMomentTensor load_kappa(const fs::path& path);
void write_kappa(const fs::path& path, const FourthMomentTensor& kappa);

// Paths inside the manifest are resolved relative to the manifest's directory.
DatasetBundle load_bundle(const fs::path& manifest);
void write_bundle_manifest(const fs::path& manifest, const fs::path& features,
                           const fs::path& labels, MatrixFormat format);

std::string fit_report_json(const FitResult& fit);

}  // namespace sgdcurve::io
