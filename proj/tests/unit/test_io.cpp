#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <string>

#include "sgdcurve/errors.hpp"
#include "sgdcurve/io.hpp"
#include "sgdcurve/random.hpp"
#include "tempdir.hpp"

using namespace sgdcurve;

namespace {

void put(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  Rng r(seed);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = r.normal() * std::pow(10.0, r.normal() * 5);
  return m;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("format_double round-trips") {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = r.normal() * std::pow(10.0, r.normal() * 50);
    CHECK(std::stod(io::format_double(x)) == x);
  }
  CHECK(io::format_double(0.421875) == "0.421875");
  CHECK(std::strtod(io::format_double(std::numeric_limits<double>::denorm_min()).c_str(), nullptr) ==
        std::numeric_limits<double>::denorm_min());
}

TEST_CASE("matrix examples") {
  TempDir dir;
  put(dir / "a.csv", "1,2\n3,4\n");
  const Matrix a = io::load_matrix(dir / "a.csv", io::MatrixFormat::csv);
  CHECK(a.rows() == 2);
  CHECK(a(1, 0) == 3.0);
  CHECK(a(0, 1) == 2.0);

  put(dir / "h.csv", "x,y\n1,2\n");
  CHECK(io::load_matrix(dir / "h.csv", io::MatrixFormat::csv).rows() == 1);

  const double vals[8] = {1, 2, 3, 4, 5, 6, 7, 8};
  put(dir / "b.bin", std::string(reinterpret_cast<const char*>(vals), sizeof vals));
  put(dir / "b.meta.json", R"({"rows":2,"cols":4})");
  const Matrix b = io::load_matrix(dir / "b.bin", io::MatrixFormat::f64le);
  CHECK(b.rows() == 2);
  CHECK(b.cols() == 4);
  CHECK(b(1, 0) == 5.0);

  put(dir / "ragged.csv", "1,2\n3,4\n5\n");
  try {
    io::load_matrix(dir / "ragged.csv", io::MatrixFormat::csv);
    FAIL("ragged CSV accepted");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("ragged.csv:3") != std::string::npos);
  }
  put(dir / "short.bin", std::string(8, '\0'));
  put(dir / "short.meta.json", R"({"rows":2,"cols":4})");
  CHECK_THROWS_AS(io::load_matrix(dir / "short.bin", io::MatrixFormat::f64le), InputError);
  put(dir / "nan.csv", "1,nan\n");
  CHECK_THROWS_AS(io::load_matrix(dir / "nan.csv", io::MatrixFormat::csv), InputError);
  CHECK_THROWS_AS(io::load_matrix(dir / "missing.csv", io::MatrixFormat::csv), InputError);
  CHECK_THROWS_AS(io::parse_format("hdf5"), InputError);
}

TEST_CASE("round trips") {
  TempDir dir;
  const Matrix m = random_matrix(7, 5, 2);
  io::write_matrix(dir / "m.bin", m, io::MatrixFormat::f64le);
  CHECK(io::load_matrix(dir / "m.bin", io::MatrixFormat::f64le) == m);
  io::write_matrix(dir / "m.csv", m, io::MatrixFormat::csv);
  const Matrix back = io::load_matrix(dir / "m.csv", io::MatrixFormat::csv);
  CHECK(((back - m).cwiseAbs().array() <= 1e-12 * m.cwiseAbs().array()).all());

  const std::vector<double> v{1.5, -2.0, 1e-300};
  io::write_vector(dir / "v.csv", v, io::MatrixFormat::csv);
  CHECK(io::load_vector(dir / "v.csv", io::MatrixFormat::csv) == v);
  io::write_vector(dir / "v.bin", v, io::MatrixFormat::f64le);
  CHECK(io::load_vector(dir / "v.bin", io::MatrixFormat::f64le) == v);

  const Spectrum s = validate_spectrum({1.0, 1.0 / 3.0}, {0.1, 2.0}, 0.05);
  io::write_spectrum(dir / "s.csv", s);
  CHECK(std::filesystem::exists(dir / "s.meta.json"));
  CHECK(io::read_file(dir / "s.csv").rfind("k,lambda,v2\n1,", 0) == 0);
  const Spectrum sb = io::load_spectrum(dir / "s.csv");
  CHECK(sb.lambda()[1] == s.lambda()[1]);
  CHECK(sb.v2()[0] == s.v2()[0]);
  CHECK(sb.sigma2() == 0.05);

  LearningCurve c;
  c.losses = {1.0, 0.5, 0.25};
  c.std = std::vector<double>{0.0, 0.1, 0.2};
  io::write_curve(dir / "c.csv", c);
  CHECK(io::read_file(dir / "c.csv").rfind("t,loss,std\n0,1,0\n", 0) == 0);
  const LearningCurve cb = io::load_curve(dir / "c.csv");
  CHECK(cb.losses == c.losses);
  CHECK(*cb.std == *c.std);

  FourthMomentTensor k(2);
  for (std::size_t i = 0; i < 16; ++i) k.data()[i] = double(i) / 7.0;
  io::write_kappa(dir / "k.bin", k);
  const FourthMomentTensor kb = io::load_kappa(dir / "k.bin");
  CHECK(kb.n() == 2);
  CHECK(std::equal(kb.data().begin(), kb.data().end(), k.data().begin()));

  io::write_matrix(dir / "f.bin", m, io::MatrixFormat::f64le);
  io::write_vector(dir / "l.bin", std::vector<double>(7, 1.0), io::MatrixFormat::f64le);
  io::write_bundle_manifest(dir / "bundle.json", "f.bin", "l.bin", io::MatrixFormat::f64le);
  const DatasetBundle bundle = io::load_bundle(dir / "bundle.json");
  CHECK(bundle.features == m);
  CHECK(bundle.labels.size() == 7);
}

TEST_CASE("spectrum file errors") {
  TempDir dir;
  put(dir / "s.csv", "k,lam,v2\n1,1,1\n");
  put(dir / "s.meta.json", R"({"sigma2":0,"n_modes":1})");
  CHECK_THROWS_AS(io::load_spectrum(dir / "s.csv"), InputError);
  put(dir / "t.csv", "k,lambda,v2\n1,1,1\n");
  put(dir / "t.meta.json", R"({"sigma2":0,"n_modes":2})");
  CHECK_THROWS_AS(io::load_spectrum(dir / "t.csv"), InputError);
  put(dir / "u.csv", "k,lambda,v2\n1,1,1\n");
  CHECK_THROWS_AS(io::load_spectrum(dir / "u.csv"), InputError);
}

TEST_CASE("scan and fit report") {
  TempDir dir;
  io::write_scan(dir / "scan.csv", std::vector<ScanRow>{{1, 100, 0.1, 0.5, false}, {2, 50, 0.2, 0.6, false}});
  CHECK(io::read_file(dir / "scan.csv") == "m,t_used,loss\n1,100,0.5\n2,50,0.59999999999999998\n");
  FitResult f;
  f.exponent = 1.5;
  f.k_min = 10;
  f.k_max = 100;
  const std::string j = io::fit_report_json(f);
  for (const char* key : {"\"exponent\"", "\"intercept\"", "\"k_min\"", "\"k_max\"", "\"residual\""}) {
    CHECK(j.find(key) != std::string::npos);
  }
}

TEST_CASE("atomic writes leave no temporaries") {
  TempDir dir;
  io::write_file_atomic(dir / "x.txt", "hello");
  io::write_file_atomic(dir / "x.txt", "world");
  CHECK(io::read_file(dir / "x.txt") == "world");
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
}

}
