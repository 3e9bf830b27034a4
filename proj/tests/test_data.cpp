#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "hexreg/data.hpp"

using namespace hexreg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hexreg_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

ErrorCode load_error(const std::string& text) {
  const fs::path p = scratch("bad.csv");
  write_text(p, text);
  try {
    data::load_csv(p);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("load_csv accepted malformed input");
  return ErrorCode::Usage;
}

}  // namespace

TEST_CASE("generate shape, labels and determinism") {
  GenParams p;
  p.n_super = 3;
  p.classes_per_super = 2;
  p.samples_per_class = 5;
  p.input_dim = 7;
  const auto d = data::generate(p);
  CHECK(d.size() == 30);
  CHECK(d.dim() == 7);
  for (Index i = 0; i < d.size(); ++i)
    CHECK(d.superclass_labels[static_cast<std::size_t>(i)] == d.class_labels[static_cast<std::size_t>(i)] / 2);
  CHECK(data::generate(p).x == d.x);
  p.seed = 1;
  CHECK(data::generate(p).x != d.x);
}

TEST_CASE("generate in the small-noise limit collapses each class") {
  GenParams p;
  p.samples_per_class = 6;
  p.sigma_sample = 1e-12;
  const auto d = data::generate(p);
  for (Index i = 1; i < d.size(); ++i)
    if (d.class_labels[static_cast<std::size_t>(i)] == d.class_labels[static_cast<std::size_t>(i - 1)])
      CHECK((d.x.row(i) - d.x.row(i - 1)).norm() < 1e-9);
}

TEST_CASE("generate keeps the hierarchy separated") {
  GenParams p;
  p.samples_per_class = 10;
  const auto d = data::generate(p);
  double same = 0, cross = 0;
  int n_same = 0, n_cross = 0;
  for (Index i = 0; i < d.size(); ++i)
    for (Index j = i + 1; j < d.size(); ++j) {
      if (d.class_labels[static_cast<std::size_t>(i)] == d.class_labels[static_cast<std::size_t>(j)]) continue;
      const double dist = (d.x.row(i) - d.x.row(j)).norm();
      if (d.superclass_labels[static_cast<std::size_t>(i)] == d.superclass_labels[static_cast<std::size_t>(j)]) {
        same += dist;
        ++n_same;
      } else {
        cross += dist;
        ++n_cross;
      }
    }
  CHECK(same / n_same < cross / n_cross);
}

TEST_CASE("generate rejects an inverted noise hierarchy") {
  GenParams p;
  p.sigma_class = 5.0;
  try {
    data::generate(p);
    FAIL("expected BadParams");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadParams);
    CHECK(std::string(e.what()).find("sigma_class <= sigma_super") != std::string::npos);
  }
  p = GenParams{};
  p.sigma_sample = 0;
  CHECK_THROWS_AS(data::generate(p), Error);
}

TEST_CASE("augment is pure and drops coordinates at the requested rate") {
  const Vector x = Vector::Ones(20000);
  const Vector a = data::augment(x, 0.0, 0.3, 11);
  CHECK(data::augment(x, 0.0, 0.3, 11) == a);
  CHECK(data::augment(x, 0.0, 0.3, 12) != a);
  const double n = static_cast<double>(x.size()), p = 0.3;
  const double zeros = static_cast<double>((a.array() == 0.0).count());
  CHECK(std::abs(zeros - n * p) <= 2.576 * std::sqrt(n * p * (1 - p)));

  CHECK(data::augment(x, 0.0, 0.0, 5) == x);
  const Vector noisy = data::augment(Vector::Zero(20000), 0.5, 0.0, 5);
  const double sd = std::sqrt(noisy.squaredNorm() / static_cast<double>(noisy.size()));
  CHECK(sd == doctest::Approx(0.5).epsilon(0.03));
  CHECK_THROWS_AS(data::augment(x, -1.0, 0.0, 5), Error);
  CHECK_THROWS_AS(data::augment(x, 0.0, 1.0, 5), Error);
}

TEST_CASE("csv round trip is exact") {
  GenParams p;
  p.samples_per_class = 3;
  p.input_dim = 5;
  const auto d = data::generate(p);
  const fs::path path = scratch("round.csv");
  data::save_csv(d, path);
  const auto back = data::load_csv(path);
  CHECK(back.x == d.x);
  CHECK(back.class_labels == d.class_labels);
  CHECK(back.superclass_labels == d.superclass_labels);

  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  CHECK(header == "f0,f1,f2,f3,f4,class,superclass");
}

TEST_CASE("csv fixture with reordered columns") {
  const fs::path path = scratch("fixture.csv");
  write_text(path, "class,f1,superclass,f0\r\n0,0.5,0,1\r\n1,-2,0,3e-1\r\n2,7,1,0\r\n");
  const auto d = data::load_csv(path);
  REQUIRE(d.size() == 3);
  CHECK(d.dim() == 2);
  CHECK(d.x(0, 0) == 1.0);
  CHECK(d.x(0, 1) == 0.5);
  CHECK(d.x(1, 0) == 0.3);
  CHECK(d.superclass_labels == std::vector<int>{0, 0, 1});
  CHECK(d.class_labels == std::vector<int>{0, 1, 2});
}

TEST_CASE("csv schema errors") {
  CHECK(load_error("") == ErrorCode::SchemaError);
  CHECK(load_error("f0,class\n1,0\n") == ErrorCode::SchemaError);
  CHECK(load_error("f0,superclass\n1,0\n") == ErrorCode::SchemaError);
  CHECK(load_error("f0,f2,class,superclass\n1,2,0,0\n") == ErrorCode::SchemaError);
  CHECK(load_error("f0,class,superclass\nabc,0,0\n") == ErrorCode::SchemaError);
  CHECK(load_error("f0,class,superclass\n1,0\n") == ErrorCode::SchemaError);
  CHECK(load_error("f0,class,superclass\nnan,0,0\n") == ErrorCode::SchemaError);
  CHECK(load_error("f0,weight,class,superclass\n1,1,0,0\n") == ErrorCode::SchemaError);
  try {
    data::load_csv(scratch("does_not_exist.csv"));
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
}
