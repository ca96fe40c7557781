#include "helpers.hpp"
#include "oracles.hpp"

#include <algorithm>

using namespace proxsel;
using Catch::Matchers::WithinAbs;
using testing::random_matrix;
using testing::random_vector;

TEST_CASE("lambda zero is least squares", "[lasso]") {
  std::mt19937_64 rng(10);
  const Matrix x = random_matrix(rng, 30, 4);
  const Vector y = random_vector(rng, 30);
  const LassoFit fit = lasso_solve(x, y, 0.0);
  CHECK((fit.coefficients - ols(x, y).coefficients).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(fit.kkt_violation <= 1e-6);
}

TEST_CASE("lambda at or above the max correlation gives zero", "[lasso]") {
  std::mt19937_64 rng(11);
  const Matrix x = random_matrix(rng, 20, 5);
  const Vector y = random_vector(rng, 20);
  const double lmax = (x.transpose() * y).cwiseAbs().maxCoeff();
  CHECK_THAT(lasso_lambda_max(x, y, Vector::Ones(5)), WithinAbs(lmax, 1e-12));
  CHECK(lasso_solve(x, y, lmax).coefficients.isZero(0.0));
  CHECK(lasso_solve(x, y, 10.0 * lmax).coefficients.isZero(0.0));
  // just below it something enters
  CHECK_FALSE(lasso_solve(x, y, 0.9 * lmax).coefficients.isZero(0.0));
}

TEST_CASE("coordinate descent agrees with accelerated proximal gradient", "[lasso]") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unif(0.05, 0.8);
  for (int trial = 0; trial < 40; ++trial) {
    const Matrix x = random_matrix(rng, 10, 3);
    const Vector y = random_vector(rng, 10);
    Vector w = Vector::Ones(3);
    if (trial % 2 == 1)
      for (Index j = 0; j < 3; ++j) w(j) = 0.5 + 2.0 * unif(rng);
    const double lambda = unif(rng) * lasso_lambda_max(x, y, w);
    const LassoFit fit = lasso_solve(x, y, lambda, w);
    const Vector ref = oracle::fista_lasso(x, y, lambda, w);
    CHECK((fit.coefficients - ref).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(kkt_violation(x, y, lambda, w, fit.coefficients) <= 1e-6);
    CHECK(oracle::lasso_gap(x, y, lambda, w, fit.coefficients) <= 1e-8 * y.squaredNorm());
  }
}

TEST_CASE("weights order the survivors", "[lasso]") {
  std::mt19937_64 rng(13);
  const Matrix x = random_matrix(rng, 100, 4);
  const Vector y = x * Vector::Constant(4, 1.0) + 0.1 * random_vector(rng, 100);
  // one coordinate cheap, the rest nearly forbidden
  Vector w(4);
  w << 1e-3, 1e4, 1e4, 1e4;
  const LassoFit fit = lasso_solve(x, y, 1.0, w);
  CHECK(fit.coefficients(0) != 0.0);
  for (Index j = 1; j < 4; ++j) CHECK(fit.coefficients(j) == 0.0);
}

TEST_CASE("zero and duplicate columns", "[lasso]") {
  std::mt19937_64 rng(14);
  Matrix x = random_matrix(rng, 25, 3);
  x.col(1).setZero();
  const Vector y = random_vector(rng, 25);
  const LassoFit fit = lasso_solve(x, y, 0.5);
  CHECK(fit.coefficients(1) == 0.0);
  CHECK(kkt_violation(x, y, 0.5, Vector::Ones(3), fit.coefficients) <= 1e-6);

  Matrix dup = random_matrix(rng, 25, 2);
  dup.col(1) = dup.col(0);
  const LassoFit fd = lasso_solve(dup, y, 0.3);
  CHECK(kkt_violation(dup, y, 0.3, Vector::Ones(2), fd.coefficients) <= 1e-6);
}

TEST_CASE("input checks", "[lasso]") {
  const Matrix x = Matrix::Identity(3, 3);
  const Vector y = Vector::Ones(3);
  CHECK(testing::error_kind([&] { lasso_solve(x, y, -1.0); }) == ErrorKind::InvalidArgument);
  CHECK(testing::error_kind([&] { lasso_solve(x, y, 1.0, Vector::Ones(2)); }) == ErrorKind::InvalidArgument);
  CHECK(testing::error_kind([&] { lasso_solve(x, y, 1.0, Vector::Zero(3)); }) == ErrorKind::InvalidArgument);
  CHECK(testing::error_kind([&] { lasso_solve(x, Vector::Ones(2), 1.0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("sweep budget exhaustion is reported", "[lasso]") {
  std::mt19937_64 rng(15);
  Matrix x = random_matrix(rng, 40, 6);
  // strongly correlated columns slow coordinate descent down
  for (Index j = 1; j < 6; ++j) x.col(j) = x.col(0) + 1e-3 * x.col(j);
  const Vector y = random_vector(rng, 40);
  LassoOptions opt;
  opt.max_sweeps = 1;
  CHECK(testing::error_kind([&] { lasso_solve(x, y, 1e-3, opt); }) == ErrorKind::NoConvergence);
}

TEST_CASE("cross-validation", "[lasso]") {
  std::mt19937_64 rng(16);
  SECTION("pure noise picks the top of the grid") {
    const Matrix x = random_matrix(rng, 200, 5);
    const Vector y = random_vector(rng, 200);
    const CvResult cv = lasso_cv(x, y, Vector::Ones(5));
    REQUIRE(cv.grid.size() == 50);
    CHECK(cv.grid.front() > cv.grid.back());
    CHECK_THAT(cv.grid.back() / cv.grid.front(), WithinAbs(1e-4, 1e-12));
    // near the maximum: within the top fifth of the log grid
    CHECK(cv.lambda >= cv.grid[10]);
  }
  SECTION("strong signal picks a small lambda") {
    const Matrix x = random_matrix(rng, 200, 5);
    Vector beta(5);
    beta << 3, 0, -2, 0, 0;
    const Vector y = x * beta + 0.1 * random_vector(rng, 200);
    const CvResult cv = lasso_cv(x, y, Vector::Ones(5));
    CHECK(cv.lambda < 0.05 * cv.grid.front());
    // one-SE rule: never below the minimizer, and its error is within the band
    CHECK(cv.lambda_1se >= cv.lambda);
    const auto at = [&](double l) {
      return static_cast<std::size_t>(std::find(cv.grid.begin(), cv.grid.end(), l) - cv.grid.begin());
    };
    const std::size_t k = at(cv.lambda), k1 = at(cv.lambda_1se);
    REQUIRE(k1 < cv.grid.size());
    CHECK(cv.errors[k1] / 200 <= cv.errors[k] / 200 + cv.std_errors[k]);
    if (k1 > 0) CHECK(cv.errors[k1 - 1] / 200 > cv.errors[k] / 200 + cv.std_errors[k]);
  }
  SECTION("too few rows") {
    CHECK(testing::error_kind([&] { lasso_cv(Matrix::Ones(5, 2), Vector::Ones(5), Vector::Ones(2)); }) ==
          ErrorKind::InvalidArgument);
  }
}

KKT_AUDIT_CASE()
