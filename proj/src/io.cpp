#include "sgdcurve/io.hpp"

#include <unistd.h>

#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "sgdcurve/errors.hpp"

namespace sgdcurve::io {
namespace {

using json = nlohmann::json;

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return std::string(s.substr(a, b - a));
}

bool parse_number(std::string_view field, double& out) {
  const std::string t = trim(field);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  std::vector<std::vector<double>> rows;
};

CsvTable parse_csv(const fs::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  CsvTable table;
  std::string line;
  std::size_t line_no = 0, width = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_fields(line);
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (!parse_number(fields[i], values[i])) numeric = false;
    }
    if (first) {
      first = false;
      width = fields.size();
      if (!numeric) {
        table.header = std::move(fields);
        continue;
      }
    }
    if (fields.size() != width) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(width) + " fields, found " +
                       std::to_string(fields.size()));
    }
    if (!numeric) {
      throw InputError(path.string() + ":" + std::to_string(line_no) +
                       ": malformed number");
    }
    for (double v : values) {
      if (!std::isfinite(v)) {
        throw InputError(path.string() + ":" + std::to_string(line_no) +
                         ": non-finite value");
      }
    }
    table.rows.push_back(std::move(values));
  }
  return table;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

std::string encode_f64le(const double* data, std::size_t n) {
  std::string bytes(n * sizeof(double), '\0');
  for (std::size_t i = 0; i < n; ++i) {
    auto bits = std::bit_cast<std::uint64_t>(data[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    std::memcpy(bytes.data() + i * 8, &bits, 8);
  }
  return bytes;
}

std::vector<double> decode_f64le(const fs::path& path, std::size_t expected) {
  const std::string bytes = read_file(path);
  if (bytes.size() != expected * 8) {
    throw InputError(path.string() + ": expected " + std::to_string(expected * 8) +
                     " bytes from the sidecar dimensions, found " +
                     std::to_string(bytes.size()));
  }
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes.data() + i * 8, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

std::size_t json_size(const json& j, const char* key, const fs::path& where) {
  if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 0) {
    throw InputError(where.string() + ": missing or invalid \"" + key + "\"");
  }
  return j[key].get<std::size_t>();
}

}  // namespace

MatrixFormat parse_format(std::string_view name) {
  if (name == "csv") return MatrixFormat::csv;
  if (name == "f64le") return MatrixFormat::f64le;
  throw InputError("unknown format '" + std::string(name) + "' (use csv or f64le)");
}

const char* format_name(MatrixFormat f) {
  return f == MatrixFormat::csv ? "csv" : "f64le";
}

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  return p.replace_extension(".meta.json");
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  static std::atomic<unsigned> counter{0};
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw InputError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw InputError("cannot rename into " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix load_matrix(const fs::path& path, MatrixFormat format) {
  if (format == MatrixFormat::f64le) {
    const fs::path meta = sidecar_path(path);
    const json j = read_json(meta);
    const std::size_t rows = json_size(j, "rows", meta);
    const std::size_t cols = json_size(j, "cols", meta);
    const std::vector<double> data = decode_f64le(path, rows * cols);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = data[r * cols + c];
        if (!std::isfinite(v)) {
          throw InputError(path.string() + ": non-finite value at row " +
                           std::to_string(r) + ", column " + std::to_string(c));
        }
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
      }
    }
    return m;
  }
  const CsvTable t = parse_csv(path);
  if (t.rows.empty()) throw InputError(path.string() + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(t.rows.size()),
           static_cast<Eigen::Index>(t.rows.front().size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < t.rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.rows[r][c];
    }
  }
  return m;
}

void write_matrix(const fs::path& path, const Matrix& m, MatrixFormat format) {
  if (format == MatrixFormat::f64le) {
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
      }
    }
    write_file_atomic(path, encode_f64le(data.data(), data.size()));
    write_json(sidecar_path(path), json{{"rows", m.rows()}, {"cols", m.cols()}});
    return;
  }
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<double> load_vector(const fs::path& path, MatrixFormat format) {
  const Matrix m = load_matrix(path, format);
  if (m.rows() != 1 && m.cols() != 1) {
    throw InputError(path.string() + ": expected a single row or column, found " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) out[static_cast<std::size_t>(i)] = m(i);
  return out;
}

void write_vector(const fs::path& path, const std::vector<double>& v,
                  MatrixFormat format) {
  write_matrix(path,
               Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())),
               format);
}

Spectrum load_spectrum(const fs::path& path) {
  const CsvTable t = parse_csv(path);
  if (t.header != std::vector<std::string>{"k", "lambda", "v2"}) {
    throw InputError(path.string() + ": expected header k,lambda,v2");
  }
  std::vector<double> lambda, v2;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][0] != static_cast<double>(i + 1)) {
      throw InputError(path.string() + ": row " + std::to_string(i + 2) +
                       " has k=" + format_double(t.rows[i][0]) + ", expected " +
                       std::to_string(i + 1));
    }
    lambda.push_back(t.rows[i][1]);
    v2.push_back(t.rows[i][2]);
  }
  const fs::path meta = sidecar_path(path);
  const json j = read_json(meta);
  if (!j.contains("sigma2") || !j["sigma2"].is_number()) {
    throw InputError(meta.string() + ": missing \"sigma2\"");
  }
  if (json_size(j, "n_modes", meta) != lambda.size()) {
    throw InputError(meta.string() + ": n_modes does not match " + path.string());
  }
  return validate_spectrum(std::move(lambda), std::move(v2), j["sigma2"].get<double>());
}

void write_spectrum(const fs::path& path, const Spectrum& spec) {
  std::string out = "k,lambda,v2\n";
  for (std::size_t k = 0; k < spec.size(); ++k) {
    out += std::to_string(k + 1) + ',' + format_double(spec.lambda()[k]) + ',' +
           format_double(spec.v2()[k]) + '\n';
  }
  write_file_atomic(path, out);
  json meta;
  meta["sigma2"] = spec.sigma2();
  meta["n_modes"] = spec.size();
  write_json(sidecar_path(path), meta);
}

void write_curve(const fs::path& path, const LearningCurve& curve) {
  const bool with_std = curve.std.has_value();
  std::string out = with_std ? "t,loss,std\n" : "t,loss\n";
  for (std::size_t t = 0; t < curve.losses.size(); ++t) {
    out += std::to_string(t) + ',' + format_double(curve.losses[t]);
    if (with_std) out += ',' + format_double((*curve.std)[t]);
    out += '\n';
  }
  write_file_atomic(path, out);
}

LearningCurve load_curve(const fs::path& path) {
  const CsvTable t = parse_csv(path);
  const bool with_std = t.header == std::vector<std::string>{"t", "loss", "std"};
  if (!with_std && t.header != std::vector<std::string>{"t", "loss"}) {
    throw InputError(path.string() + ": expected header t,loss[,std]");
  }
  LearningCurve c;
  if (with_std) c.std.emplace();
  for (const auto& row : t.rows) {
    c.losses.push_back(row[1]);
    if (with_std) c.std->push_back(row[2]);
  }
  return c;
}

void write_scan(const fs::path& path, const std::vector<ScanRow>& rows) {
  std::string out = "m,t_used,loss\n";
  for (const auto& r : rows) {
    out += std::to_string(r.m) + ',' + std::to_string(r.t_used) + ',' +
           format_double(r.loss) + '\n';
  }
  write_file_atomic(path, out);
}

void write_scan(const fs::path& path, const std::vector<EmpiricalScanRow>& rows) {
  std::string out = "m,t_used,loss,std\n";
  for (const auto& r : rows) {
    out += std::to_string(r.m) + ',' + std::to_string(r.t_used) + ',' +
           format_double(r.loss) + ',' + format_double(r.std) + '\n';
  }
  write_file_atomic(path, out);
}

FourthMomentTensor load_kappa(const fs::path& path) {
  const fs::path meta = sidecar_path(path);
  const std::size_t n = json_size(read_json(meta), "n", meta);
  std::vector<double> data = decode_f64le(path, n * n * n * n);
  return FourthMomentTensor(n, std::move(data));
}

void write_kappa(const fs::path& path, const FourthMomentTensor& kappa) {
  const auto d = kappa.data();
  write_file_atomic(path, encode_f64le(d.data(), d.size()));
  write_json(sidecar_path(path), json{{"n", kappa.n()}});
}

DatasetBundle load_bundle(const fs::path& manifest) {
  const json j = read_json(manifest);
  for (const char* key : {"features", "labels", "format"}) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw InputError(manifest.string() + ": missing \"" + key + "\"");
    }
  }
  const MatrixFormat f = parse_format(j["format"].get<std::string>());
  const fs::path base = manifest.parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  DatasetBundle b;
  b.features = load_matrix(resolve(j["features"].get<std::string>()), f);
  b.labels = load_vector(resolve(j["labels"].get<std::string>()), f);
  b.validate();
  return b;
}

void write_bundle_manifest(const fs::path& manifest, const fs::path& features,
                           const fs::path& labels, MatrixFormat format) {
  json j;
  j["features"] = features.string();
  j["labels"] = labels.string();
  j["format"] = format_name(format);
  write_json(manifest, j);
}

std::string fit_report_json(const FitResult& fit) {
  json j;
  j["exponent"] = fit.exponent;
  j["intercept"] = fit.intercept;
  j["k_min"] = fit.k_min;
  j["k_max"] = fit.k_max;
  j["residual"] = fit.residual;
  return j.dump(2) + "\n";
}

}  // namespace sgdcurve::io
