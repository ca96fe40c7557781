#pragma once

// Weighted LASSO by cyclic coordinate descent on the Gram matrix:
//   minimize 0.5 * ||y - X a||^2 + lambda * sum_j w_j |a_j|
// A result is only returned once the KKT conditions and a duality gap bound
// are both met.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "proxsel/error.hpp"
#include "proxsel/linalg.hpp"

// Test builds may define this to inspect every solution before it is returned.
#ifndef PROXSEL_LASSO_AUDIT
#define PROXSEL_LASSO_AUDIT(gram, lambda, weights, fit) ((void)0)
#endif

namespace proxsel {

struct LassoOptions {
  double kkt_tol = 1e-6;
  /// relative to ||y||^2
  double gap_tol = 1e-8;
  long max_sweeps = 100000;
  /// re-solve the active set exactly once the support has settled
  bool polish = true;
};

struct LassoFit {
  Vector coefficients;
  long sweeps = 0;
  double duality_gap = 0.0;
  double kkt_violation = 0.0;
};

/// Sufficient statistics of a LASSO problem. Cross-validation reuses these
/// per fold instead of touching the raw design.
struct LassoGram {
  Matrix gram;   // X^T X
  Vector xty;    // X^T y
  double yty = 0.0;

  static LassoGram from(const Matrix& design, const Vector& response) {
    if (design.rows() != response.size())
      fail(ErrorKind::InvalidArgument, "lasso: response length does not match design rows");
    LassoGram g;
    g.gram = design.transpose() * design;
    g.xty = design.transpose() * response;
    g.yty = response.squaredNorm();
    return g;
  }
};

namespace detail {

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

inline double kkt_from_gradient(const Vector& grad, const Vector& coef, double lambda,
                                const Vector& weights) {
  double worst = 0.0;
  for (Index j = 0; j < coef.size(); ++j) {
    const double pen = lambda * weights(j);
    double v;
    if (coef(j) != 0.0)
      v = std::abs(grad(j) + pen * (coef(j) > 0.0 ? 1.0 : -1.0));
    else
      v = std::max(0.0, std::abs(grad(j)) - pen);
    worst = std::max(worst, v);
  }
  return worst;
}

// primal minus dual at the scaled-residual dual point
inline double duality_gap(const LassoGram& g, const Vector& coef, const Vector& gcoef,
                          double lambda, const Vector& weights) {
  const double rr = std::max(0.0, g.yty - 2.0 * g.xty.dot(coef) + coef.dot(gcoef));
  const double primal = 0.5 * rr + lambda * weights.cwiseProduct(coef.cwiseAbs()).sum();
  const Vector xtr = g.xty - gcoef;
  double s = 1.0;
  for (Index j = 0; j < xtr.size(); ++j) {
    const double a = std::abs(xtr(j));
    if (a > 0.0) s = std::min(s, lambda * weights(j) / a);
  }
  const double ytr = g.yty - g.xty.dot(coef);
  const double dual = s * ytr - 0.5 * s * s * rr;
  return std::max(0.0, primal - dual);
}

inline void check_inputs(Index p, double lambda, const Vector& weights) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    fail(ErrorKind::InvalidArgument, "lasso: lambda must be finite and >= 0");
  if (weights.size() != p)
    fail(ErrorKind::InvalidArgument, "lasso: weights length does not match column count");
  for (Index j = 0; j < p; ++j)
    if (!(weights(j) > 0.0) || !std::isfinite(weights(j)))
      fail(ErrorKind::InvalidArgument, "lasso: weights must be positive and finite");
}

// Exact solve on the current support with signs held fixed. Accepted only if
// signs survive and the KKT residual does not get worse.
inline void polish(const LassoGram& g, double lambda, const Vector& weights, Vector& coef,
                   Vector& gcoef) {
  IndexSet active;
  for (Index j = 0; j < coef.size(); ++j)
    if (coef(j) != 0.0) active.push_back(j);
  if (active.empty()) return;
  const Index k = static_cast<Index>(active.size());
  Matrix gs(k, k);
  Vector rhs(k);
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) gs(a, b) = g.gram(active[a], active[b]);
    const Index j = active[a];
    rhs(a) = g.xty(j) - lambda * weights(j) * (coef(j) > 0.0 ? 1.0 : -1.0);
  }
  Eigen::LDLT<Matrix> ldlt(gs);
  if (ldlt.info() != Eigen::Success) return;
  const Vector sol = ldlt.solve(rhs);
  if (!sol.allFinite()) return;
  Vector trial = coef;
  for (Index a = 0; a < k; ++a) {
    if ((sol(a) > 0.0) != (coef(active[a]) > 0.0) || sol(a) == 0.0) return;
    trial(active[a]) = sol(a);
  }
  const Vector gtrial = g.gram * trial;
  const double before = kkt_from_gradient(gcoef - g.xty, coef, lambda, weights);
  const double after = kkt_from_gradient(gtrial - g.xty, trial, lambda, weights);
  if (after <= before) {
    coef = trial;
    gcoef = gtrial;
  }
}

}  // namespace detail

/// Largest violation of the LASSO stationarity conditions at coef.
inline double kkt_violation(const Matrix& design, const Vector& response, double lambda,
                            const Vector& weights, const Vector& coef) {
  const Vector grad = -(design.transpose() * (response - design * coef));
  return detail::kkt_from_gradient(grad, coef, lambda, weights);
}

inline LassoFit lasso_solve_gram(const LassoGram& g, double lambda, const Vector& weights,
                                 const LassoOptions& opt = {}, const Vector* warm_start = nullptr) {
  const Index p = g.gram.cols();
  detail::check_inputs(p, lambda, weights);

  LassoFit fit;
  Vector coef = Vector::Zero(p);
  if (warm_start != nullptr && warm_start->size() == p && warm_start->allFinite()) coef = *warm_start;
  if (p == 0) {
    fit.coefficients = coef;
    return fit;
  }

  const double max_diag = g.gram.diagonal().maxCoeff();
  // columns that are numerically zero stay pinned at zero
  const double zero_col = 1e-14 * std::max(max_diag, std::numeric_limits<double>::min());
  for (Index j = 0; j < p; ++j)
    if (g.gram(j, j) <= zero_col) coef(j) = 0.0;

  Vector gcoef = g.gram * coef;
  const double gap_bound = opt.gap_tol * std::max(g.yty, std::numeric_limits<double>::min());

  for (long sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    for (Index j = 0; j < p; ++j) {
      const double gjj = g.gram(j, j);
      if (gjj <= zero_col) continue;
      const double z = g.xty(j) - gcoef(j) + gjj * coef(j);
      const double next = detail::soft_threshold(z, lambda * weights(j)) / gjj;
      const double delta = next - coef(j);
      if (delta != 0.0) {
        gcoef.noalias() += g.gram.col(j) * delta;
        coef(j) = next;
      }
    }
    const double kkt = detail::kkt_from_gradient(gcoef - g.xty, coef, lambda, weights);
    if (kkt > opt.kkt_tol) continue;
    // at lambda = 0 the dual point is degenerate; stationarity alone certifies
    const double gap = lambda > 0.0 ? detail::duality_gap(g, coef, gcoef, lambda, weights) : 0.0;
    if (gap > gap_bound) continue;

    if (opt.polish) {
      detail::polish(g, lambda, weights, coef, gcoef);
      gcoef = g.gram * coef;  // drop accumulated update drift
    }
    fit.coefficients = coef;
    fit.sweeps = sweep;
    fit.kkt_violation = detail::kkt_from_gradient(gcoef - g.xty, coef, lambda, weights);
    fit.duality_gap = lambda > 0.0 ? detail::duality_gap(g, coef, gcoef, lambda, weights) : 0.0;
    PROXSEL_LASSO_AUDIT(g, lambda, weights, fit);
    return fit;
  }
  std::ostringstream msg;
  msg << "lasso: no convergence after " << opt.max_sweeps << " sweeps";
  fail(ErrorKind::NoConvergence, msg.str());
}

inline LassoFit lasso_solve(const Matrix& design, const Vector& response, double lambda,
                            const Vector& weights, const LassoOptions& opt = {}) {
  return lasso_solve_gram(LassoGram::from(design, response), lambda, weights, opt);
}

inline LassoFit lasso_solve(const Matrix& design, const Vector& response, double lambda,
                            const LassoOptions& opt = {}) {
  return lasso_solve(design, response, lambda, Vector::Ones(design.cols()), opt);
}

/// Smallest lambda at which the all-zero vector is optimal.
inline double lasso_lambda_max(const Matrix& design, const Vector& response, const Vector& weights) {
  const Vector c = design.transpose() * response;
  double m = 0.0;
  for (Index j = 0; j < c.size(); ++j) m = std::max(m, std::abs(c(j)) / weights(j));
  return m;
}

struct CvResult {
  double lambda = 0.0;         // minimizer of the CV error
  double lambda_1se = 0.0;     // largest lambda within one SE of the minimum
  std::vector<double> grid;    // descending
  std::vector<double> errors;  // summed held-out squared error per grid point
  std::vector<double> std_errors;
};

/// K-fold cross-validation over a log grid from lambda_max down to
/// lambda_max * min_ratio. Row i belongs to fold i mod K. Ties go to the
/// larger lambda. The objective is a sum over rows, so a fold with n_train
/// rows is solved at lambda * n_train / n to stay on the full-data scale.
inline CvResult lasso_cv(const Matrix& design, const Vector& response, const Vector& weights,
                         int folds = 10, int grid_size = 50, double min_ratio = 1e-4,
                         const LassoOptions& opt = {}) {
  const Index n = design.rows();
  const Index p = design.cols();
  detail::check_inputs(p, 0.0, weights);
  if (folds < 2 || n < folds) fail(ErrorKind::InvalidArgument, "lasso_cv: need at least one row per fold");
  if (grid_size < 2) fail(ErrorKind::InvalidArgument, "lasso_cv: grid needs two or more points");

  CvResult out;
  const double lmax = lasso_lambda_max(design, response, weights);
  if (!(lmax > 0.0)) return out;  // response orthogonal to design: nothing to select

  out.grid.resize(static_cast<std::size_t>(grid_size));
  const double step = std::log(min_ratio) / (grid_size - 1);
  for (int k = 0; k < grid_size; ++k) out.grid[static_cast<std::size_t>(k)] = lmax * std::exp(step * k);
  out.errors.assign(out.grid.size(), 0.0);
  Matrix per_fold = Matrix::Zero(grid_size, folds);  // mean squared error

  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train, test;
    for (Index i = 0; i < n; ++i) (i % folds == f ? test : train).push_back(i);
    Matrix xtr(static_cast<Index>(train.size()), p);
    Vector ytr(static_cast<Index>(train.size()));
    for (std::size_t r = 0; r < train.size(); ++r) {
      xtr.row(static_cast<Index>(r)) = design.row(train[r]);
      ytr(static_cast<Index>(r)) = response(train[r]);
    }
    const LassoGram g = LassoGram::from(xtr, ytr);
    Vector warm = Vector::Zero(p);
    const double shrink = static_cast<double>(train.size()) / static_cast<double>(n);
    for (std::size_t k = 0; k < out.grid.size(); ++k) {
      const LassoFit fit = lasso_solve_gram(g, out.grid[k] * shrink, weights, opt, &warm);
      warm = fit.coefficients;
      double err = 0.0;
      for (Index i : test) {
        const double r = response(i) - design.row(i).dot(fit.coefficients);
        err += r * r;
      }
      out.errors[k] += err;
      per_fold(static_cast<Index>(k), f) = err / static_cast<double>(test.size());
    }
  }
  out.std_errors.resize(out.grid.size());
  for (Index k = 0; k < grid_size; ++k) {
    const auto row = per_fold.row(k);
    const double var = (row.array() - row.mean()).square().sum() / (folds - 1);
    out.std_errors[static_cast<std::size_t>(k)] = std::sqrt(var / folds);
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < out.errors.size(); ++k)
    if (out.errors[k] < out.errors[best]) best = k;
  out.lambda = out.grid[best];
  // same rule on the mean-error scale the SE lives on
  const double cut = out.errors[best] / n + out.std_errors[best];
  std::size_t pick = best;
  while (pick > 0 && out.errors[pick - 1] / n <= cut) --pick;
  out.lambda_1se = out.grid[pick];
  return out;
}

}  // namespace proxsel
