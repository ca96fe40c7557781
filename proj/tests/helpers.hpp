#pragma once

#include "kkt_audit.hpp"

#include <optional>
#include <random>

#include <catch_amalgamated.hpp>

#include "proxsel/proxsel.hpp"

namespace testing {

using proxsel::Index;
using proxsel::Matrix;
using proxsel::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, Index n, double sd = 1.0) {
  return random_matrix(rng, n, 1, sd).col(0);
}

/// Runs fn and returns the kind of the proxsel::Error it throws.
template <class Fn>
std::optional<proxsel::ErrorKind> error_kind(Fn&& fn) {
  try {
    fn();
  } catch (const proxsel::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace testing

// Goes last in each test file: every LASSO solve made by the binary so far
// must have met the stationarity conditions.
#define KKT_AUDIT_CASE()                                                          \
  TEST_CASE("kkt audit: every lasso solution is stationary", "[kkt]") {           \
    INFO("calls " << kkt_audit::calls.load() << ", worst " << kkt_audit::worst); \
    CHECK(kkt_audit::failures.load() == 0);                                      \
  }
