#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "collapse_lab/data.hpp"
#include "collapse_lab/errors.hpp"

using namespace collapse_lab;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("collapse_lab_test_" + name);
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

}  // namespace

TEST_CASE("generate is deterministic and linear") {
  const SyntheticSpec spec = SyntheticSpec::standard(4, 3, 50, 11);
  const Dataset a = generate(spec);
  const Dataset b = generate(spec);
  CHECK(a.X.rows() == 50);
  CHECK(a.X.cols() == 4);
  CHECK(a.Y.cols() == 3);
  CHECK(a.X == b.X);
  CHECK(a.Y == b.Y);
  CHECK((a.Y - a.X * spec.M.transpose()).norm() < 1e-12);
  const Dataset c = generate(SyntheticSpec::standard(4, 3, 50, 12));
  CHECK(c.X != a.X);
}

TEST_CASE("standard spec has a spread-out covariance") {
  const SyntheticSpec spec = SyntheticSpec::standard(5, 5, 10, 3);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(spec.A);
  CHECK(eig.eigenvalues().maxCoeff() == doctest::Approx(14.0));
  CHECK(eig.eigenvalues().minCoeff() == doctest::Approx(2.0));
  CHECK((spec.M * spec.M.transpose() - Matrix::Identity(5, 5)).norm() < 1e-12);
}

TEST_CASE("validate rejects bad synthetic specs") {
  SyntheticSpec spec = SyntheticSpec::standard(3, 2, 10, 0);
  spec.A(0, 1) += 1.0;
  CHECK_THROWS_AS(validate(spec), InvalidSpec);
  spec = SyntheticSpec::standard(3, 2, 10, 0);
  spec.A = -spec.A;
  CHECK_THROWS_AS(validate(spec), InvalidSpec);
  spec = SyntheticSpec::standard(3, 2, 10, 0);
  spec.M = Matrix::Zero(2, 4);
  CHECK_THROWS_AS(validate(spec), InvalidSpec);
  CHECK_THROWS_AS(SyntheticSpec::standard(0, 2, 10, 0), InvalidSpec);
}

TEST_CASE("center removes the means") {
  const Dataset ds = generate(SyntheticSpec::standard(3, 2, 40, 5));
  Dataset shifted = ds;
  shifted.X.rowwise() += Eigen::RowVector3d(1.0, -2.0, 3.0);
  const CenteredDataset c = center(shifted);
  CHECK(c.data.centered);
  CHECK(c.data.X.colwise().mean().norm() < 1e-12);
  CHECK(c.data.Y.colwise().mean().norm() < 1e-12);
  CHECK((c.mean_x - Vector(shifted.X.colwise().mean().transpose())).norm() < 1e-12);
}

TEST_CASE("csv and binary round trips are exact") {
  const Dataset ds = generate(SyntheticSpec::standard(3, 2, 25, 8));
  for (const char* name : {"rt.csv", "rt.bin"}) {
    const auto p = temp_path(name);
    save(ds, p);
    const Dataset back = load(p);
    CHECK(back.X == ds.X);
    CHECK(back.Y == ds.Y);
    std::filesystem::remove(p);
  }
}

TEST_CASE("loading reports missing and malformed files") {
  CHECK_THROWS_AS(load(temp_path("does_not_exist.csv")), IoError);

  const auto p = temp_path("bad.csv");
  write_text(p, "x0,x1,y0\n1,2,3\n4,oops,6\n");
  try {
    load(p);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
    CHECK(e.column() == 2);
  }
  write_text(p, "x0,x1,y0\n1,2\n");
  CHECK_THROWS_AS(load(p), ParseError);
  write_text(p, "a,b\n1,2\n");
  CHECK_THROWS_AS(load(p), ParseError);
  write_text(p, "");
  CHECK_THROWS_AS(load(p), ParseError);
  std::filesystem::remove(p);

  const auto b = temp_path("bad.bin");
  write_text(b, "garbage bytes");
  CHECK_THROWS_AS(load(b), ParseError);
  std::filesystem::remove(b);
}

TEST_CASE("random_orthogonal is orthogonal and seeded") {
  const Matrix Q = random_orthogonal(6, 4);
  CHECK((Q.transpose() * Q - Matrix::Identity(6, 6)).norm() < 1e-12);
  CHECK(random_orthogonal(6, 4) == Q);
}

TEST_CASE("center zeroes a constant column and returns its value") {
  Dataset ds;
  ds.X = Matrix::Ones(4, 2);
  ds.X.col(1) << 1.0, 2.0, 3.0, 4.0;
  ds.X.col(0) *= 7.0;
  ds.Y = Matrix::Zero(4, 1);
  const CenteredDataset c = center(ds);
  CHECK(c.data.X.col(0).norm() == 0.0);
  CHECK(c.mean_x(0) == 7.0);
}
