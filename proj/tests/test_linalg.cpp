#include "helpers.hpp"
#include "oracles.hpp"

using namespace proxsel;
using Catch::Matchers::WithinAbs;
using testing::random_matrix;

TEST_CASE("project onto the first axis", "[linalg]") {
  Matrix design(2, 1), target(2, 1);
  design << 1, 0;
  target << 3, 4;
  const Matrix p = project(design, target);
  CHECK_THAT(p(0, 0), WithinAbs(3.0, 1e-14));
  CHECK_THAT(p(1, 0), WithinAbs(0.0, 1e-14));
  const Matrix r = residual_project(design, target);
  CHECK_THAT(r(0, 0), WithinAbs(0.0, 1e-14));
  CHECK_THAT(r(1, 0), WithinAbs(4.0, 1e-14));
}

TEST_CASE("identity design leaves the target unchanged", "[linalg]") {
  std::mt19937_64 rng(1);
  const Matrix t = random_matrix(rng, 2, 3);
  CHECK((project(Matrix::Identity(2, 2), t) - t).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("orthogonal target survives the residual projection", "[linalg]") {
  Matrix design(3, 1), target(3, 1);
  design << 1, 1, 0;
  target << 1, -1, 5;
  CHECK((residual_project(design, target) - target).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("projection is idempotent, symmetric and splits the target", "[linalg]") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix design = random_matrix(rng, 5, 2);
    const Matrix v = random_matrix(rng, 5, 3);
    const Matrix pv = project(design, v);
    CHECK((project(design, pv) - pv).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((pv + residual_project(design, v) - v).cwiseAbs().maxCoeff() < 1e-10);
    // matches the normal-equation oracle
    CHECK((pv - oracle::ne_project(design, v)).cwiseAbs().maxCoeff() < 1e-10);

    const Matrix u = random_matrix(rng, 5, 1);
    const Matrix w = random_matrix(rng, 5, 1);
    const double lhs = project(design, u).col(0).dot(w.col(0));
    const double rhs = u.col(0).dot(project(design, w).col(0));
    CHECK_THAT(lhs, WithinAbs(rhs, 1e-10));

    const Matrix rv = residual_project(design, v);
    for (Index c = 0; c < v.cols(); ++c) {
      const double total = v.col(c).squaredNorm();
      const double parts = pv.col(c).squaredNorm() + rv.col(c).squaredNorm();
      CHECK(std::abs(total - parts) <= 1e-8 * total);
      CHECK((design.transpose() * rv.col(c)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("rank-deficient designs are refused", "[linalg]") {
  Matrix design(4, 2);
  design << 1, 2, 2, 4, 3, 6, 4, 8;
  const Matrix t = Matrix::Ones(4, 1);
  CHECK(testing::error_kind([&] { project(design, t); }) == ErrorKind::RankDeficient);
  CHECK(testing::error_kind([&] { residual_project(design, t); }) == ErrorKind::RankDeficient);
  CHECK(testing::error_kind([&] { ols(design, t.col(0)); }) == ErrorKind::RankDeficient);
  // more columns than rows
  CHECK(testing::error_kind([&] { project(Matrix::Ones(1, 2), Matrix::Ones(1, 1)); }) ==
        ErrorKind::RankDeficient);
}

TEST_CASE("ols exact fits", "[linalg]") {
  Matrix design(2, 1);
  design << 1, 2;
  Vector y(2);
  y << 2, 4;
  const OlsFit fit = ols(design, y);
  CHECK_THAT(fit.coefficients(0), WithinAbs(2.0, 1e-14));
  CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THAT(fit.residual_variance, WithinAbs(0.0, 1e-20));

  Vector z(3);
  z << -1.5, 7.0, 0.25;
  const OlsFit id = ols(Matrix::Identity(3, 3), z);
  CHECK((id.coefficients - z).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("ols normal equations and column rescaling", "[linalg]") {
  std::mt19937_64 rng(3);
  const Matrix design = random_matrix(rng, 50, 3);
  const Vector y = testing::random_vector(rng, 50);
  const OlsFit fit = ols(design, y);
  CHECK((design.transpose() * fit.residuals).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((fit.coefficients - oracle::ne_coefficients(design, y)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THAT(fit.residual_variance, WithinAbs(fit.residuals.squaredNorm() / 50.0, 1e-14));

  Matrix scaled = design;
  scaled.col(1) *= -3.5;
  const OlsFit fs = ols(scaled, y);
  CHECK_THAT(fs.coefficients(1), WithinAbs(fit.coefficients(1) / -3.5, 1e-8));
  CHECK(((scaled * fs.coefficients) - (design * fit.coefficients)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("gram extremes", "[linalg]") {
  SECTION("orthonormal columns") {
    std::mt19937_64 rng(4);
    const Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(rng, 6, 4)).householderQ() * Matrix::Identity(6, 4);
    const GramExtremes g = gram_support_extremes(q, {0, 2, 3});
    CHECK_THAT(g.min_eig, WithinAbs(1.0, 1e-12));
    CHECK_THAT(g.max_eig, WithinAbs(1.0, 1e-12));
  }
  SECTION("single column") {
    Matrix m(3, 2);
    m << 1, 0, 2, 5, 2, 1;
    const GramExtremes g = gram_support_extremes(m, {0});
    CHECK_THAT(g.min_eig, WithinAbs(9.0, 1e-12));
    CHECK_THAT(g.max_eig, WithinAbs(9.0, 1e-12));
  }
  SECTION("pairs against the angular sweep") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix m = random_matrix(rng, 6, 4, 1.0 / std::sqrt(6.0));
      const GramExtremes g = gram_support_extremes(m, {1, 3});
      const auto [lo, hi] = oracle::angular_sweep(m, 1, 3);
      CHECK(g.min_eig <= g.max_eig);
      CHECK(g.min_eig >= 0.0);
      CHECK_THAT(g.min_eig, WithinAbs(lo, 1e-6));
      CHECK_THAT(g.max_eig, WithinAbs(hi, 1e-6));
    }
  }
  SECTION("bad supports") {
    const Matrix m = Matrix::Identity(3, 3);
    CHECK(testing::error_kind([&] { gram_support_extremes(m, {}); }) == ErrorKind::EmptySupport);
    CHECK(testing::error_kind([&] { gram_support_extremes(m, {3}); }) == ErrorKind::InvalidArgument);
  }
}

TEST_CASE("hcat and select_columns", "[linalg]") {
  Matrix a(2, 1), b(2, 2);
  a << 1, 2;
  b << 3, 4, 5, 6;
  const Matrix h = hcat({a, Matrix(2, 0), b});
  REQUIRE(h.cols() == 3);
  CHECK(h(1, 2) == 6);
  const Matrix s = select_columns(h, {2, 0});
  CHECK(s(0, 0) == 4);
  CHECK(s(1, 1) == 2);
}
