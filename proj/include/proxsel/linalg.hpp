#pragma once

// Dense projections, least squares and Gram spectra. Everything here is a pure
// function of its inputs; projections go through a thin Householder QR of the
// design and never form (M^T M)^{-1}.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <sstream>
#include <utility>
#include <vector>

#include "proxsel/error.hpp"

namespace proxsel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
/// Sorted, zero-based column indices.
using IndexSet = std::vector<Index>;

inline constexpr double kDefaultRankTol = 1e-10;

struct OlsFit {
  Vector coefficients;
  Vector residuals;
  /// ||residuals||^2 / n
  double residual_variance = 0.0;
};

struct GramExtremes {
  double min_eig = 0.0;
  double max_eig = 0.0;
};

/// Orthogonal projector onto the column space of a design fixed at
/// construction. Factor once, apply to many targets.
class Projector {
 public:
  Projector() = default;

  explicit Projector(const Matrix& design, double rank_tol = kDefaultRankTol)
      : rows_(design.rows()) {
    const Index n = design.rows();
    const Index p = design.cols();
    if (n < 1) fail(ErrorKind::InvalidArgument, "design has no rows");
    if (!design.allFinite()) fail(ErrorKind::InvalidArgument, "design has non-finite entries");
    if (p == 0) {
      basis_ = Matrix::Zero(n, 0);
      r_ = Matrix::Zero(0, 0);
      return;
    }
    if (n < p) {
      std::ostringstream msg;
      msg << "design is " << n << "x" << p << ", fewer rows than columns";
      fail(ErrorKind::RankDeficient, msg.str());
    }
    Eigen::HouseholderQR<Matrix> qr(design);
    r_ = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    const Vector sv = Eigen::JacobiSVD<Matrix>(r_).singularValues();
    const double smax = sv(0);
    const double smin = sv(p - 1);
    if (!(smax > 0.0) || !(smin > rank_tol * smax)) {
      std::ostringstream msg;
      msg << "design (" << n << "x" << p << ") is rank deficient: smallest/largest singular value = "
          << (smax > 0.0 ? smin / smax : 0.0) << " <= " << rank_tol;
      fail(ErrorKind::RankDeficient, msg.str());
    }
    basis_ = qr.householderQ() * Matrix::Identity(n, p);
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return basis_.cols(); }
  const Matrix& basis() const noexcept { return basis_; }

  Matrix project(const Eigen::Ref<const Matrix>& target) const {
    check_rows(target.rows());
    if (cols() == 0) return Matrix::Zero(target.rows(), target.cols());
    return basis_ * (basis_.transpose() * target);
  }

  Matrix residual(const Eigen::Ref<const Matrix>& target) const {
    return target - project(target);
  }

  /// Least-squares coefficients (M^T M)^{-1} M^T target, solved through R.
  Matrix coefficients(const Eigen::Ref<const Matrix>& target) const {
    check_rows(target.rows());
    if (cols() == 0) return Matrix::Zero(0, target.cols());
    const Matrix qt = basis_.transpose() * target;
    return r_.triangularView<Eigen::Upper>().solve(qt);
  }

 private:
  void check_rows(Index n) const {
    if (n != rows_) fail(ErrorKind::InvalidArgument, "target row count does not match design");
  }

  Index rows_ = 0;
  Matrix basis_;
  Matrix r_;
};

inline Matrix project(const Matrix& design, const Matrix& target, double rank_tol = kDefaultRankTol) {
  return Projector(design, rank_tol).project(target);
}

inline Matrix residual_project(const Matrix& design, const Matrix& target,
                               double rank_tol = kDefaultRankTol) {
  return Projector(design, rank_tol).residual(target);
}

inline OlsFit ols(const Matrix& design, const Vector& response, double rank_tol = kDefaultRankTol) {
  if (design.rows() != response.size())
    fail(ErrorKind::InvalidArgument, "response length does not match design rows");
  const Projector proj(design, rank_tol);
  OlsFit fit;
  fit.coefficients = proj.coefficients(response);
  fit.residuals = response - design * fit.coefficients;
  fit.residual_variance = fit.residuals.squaredNorm() / static_cast<double>(response.size());
  return fit;
}

inline Matrix select_columns(const Matrix& m, const IndexSet& cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= m.cols())
      fail(ErrorKind::InvalidArgument, "column index out of range");
    out.col(static_cast<Index>(j)) = m.col(cols[j]);
  }
  return out;
}

/// Horizontal concatenation; all blocks must share a row count.
inline Matrix hcat(std::initializer_list<Eigen::Ref<const Matrix>> blocks) {
  Index rows = -1;
  Index cols = 0;
  for (const auto& b : blocks) {
    if (rows < 0) rows = b.rows();
    if (b.rows() != rows) fail(ErrorKind::InvalidArgument, "hcat: row counts differ");
    cols += b.cols();
  }
  Matrix out(std::max<Index>(rows, 0), cols);
  Index at = 0;
  for (const auto& b : blocks) {
    out.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  return out;
}

/// Smallest and largest eigenvalue of the Gram matrix of the chosen columns.
inline GramExtremes gram_support_extremes(const Matrix& design, const IndexSet& support) {
  if (support.empty()) fail(ErrorKind::EmptySupport, "support must contain at least one column");
  const Matrix sub = select_columns(design, support);
  const Matrix gram = sub.transpose() * sub;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const Vector& ev = eig.eigenvalues();
  // rounding can push a zero eigenvalue slightly negative
  return {std::max(0.0, ev(0)), std::max(0.0, ev(ev.size() - 1))};
}

}  // namespace proxsel
