#pragma once

#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "proxsel/error.hpp"
#include "proxsel/linalg.hpp"

namespace proxsel {

inline constexpr const char* kInterceptName = "(intercept)";

/// Outcome Y, treatment D, candidate TCPs Z, candidate OCPs W, covariates X.
struct Dataset {
  Vector outcome;
  Vector treatment;
  Matrix tcp;
  Matrix ocp;
  Matrix covariates;
  std::vector<std::string> tcp_names;
  std::vector<std::string> ocp_names;
  std::vector<std::string> covariate_names;

  Index n() const noexcept { return outcome.size(); }
  Index p_z() const noexcept { return tcp.cols(); }
  Index p_w() const noexcept { return ocp.cols(); }
  Index p_x() const noexcept { return covariates.cols(); }

  /// Shape and finiteness checks. Rank is checked where the design is factored.
  void validate() const {
    const Index rows = n();
    auto bad = [](const std::string& what) { fail(ErrorKind::InvalidArgument, what); };
    if (rows < 1) bad("dataset has no rows");
    if (treatment.size() != rows) bad("treatment length differs from outcome length");
    if (tcp.rows() != rows) bad("TCP matrix row count differs from outcome length");
    if (ocp.rows() != rows) bad("OCP matrix row count differs from outcome length");
    if (covariates.rows() != rows && covariates.size() != 0)
      bad("covariate matrix row count differs from outcome length");
    if (p_w() < 1) bad("at least one OCP column is required");
    if (!(rows > p_z() + p_w() + p_x() + 1)) {
      std::ostringstream msg;
      msg << "need n > p_z + p_w + p_x + 1 (n = " << rows << ", p_z = " << p_z() << ", p_w = " << p_w()
          << ", p_x = " << p_x() << ")";
      bad(msg.str());
    }
    if (!outcome.allFinite() || !treatment.allFinite() || !tcp.allFinite() || !ocp.allFinite() ||
        !covariates.allFinite())
      bad("dataset contains non-finite values");
    if (tcp_names.size() != static_cast<std::size_t>(p_z()) ||
        ocp_names.size() != static_cast<std::size_t>(p_w()) ||
        covariate_names.size() != static_cast<std::size_t>(p_x()))
      bad("column name lists do not match matrix widths");
  }

  /// M = (Z, D, X)
  Matrix first_stage_design() const {
    return hcat({tcp, Matrix(treatment), covariates_or_empty()});
  }

  Matrix covariates_or_empty() const {
    if (covariates.rows() == n()) return covariates;
    return Matrix::Zero(n(), 0);
  }

  Dataset rows(std::span<const Index> idx) const {
    Dataset out;
    const Index m = static_cast<Index>(idx.size());
    out.outcome.resize(m);
    out.treatment.resize(m);
    out.tcp.resize(m, p_z());
    out.ocp.resize(m, p_w());
    out.covariates.resize(m, p_x());
    for (Index r = 0; r < m; ++r) {
      const Index i = idx[static_cast<std::size_t>(r)];
      if (i < 0 || i >= n()) fail(ErrorKind::InvalidArgument, "row index out of range");
      out.outcome(r) = outcome(i);
      out.treatment(r) = treatment(i);
      out.tcp.row(r) = tcp.row(i);
      out.ocp.row(r) = ocp.row(i);
      if (p_x() > 0) out.covariates.row(r) = covariates.row(i);
    }
    out.tcp_names = tcp_names;
    out.ocp_names = ocp_names;
    out.covariate_names = covariate_names;
    return out;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    auto same = [](const auto& x, const auto& y) {
      return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
    };
    return same(a.outcome, b.outcome) && same(a.treatment, b.treatment) && same(a.tcp, b.tcp) &&
           same(a.ocp, b.ocp) && same(a.covariates, b.covariates) && a.tcp_names == b.tcp_names &&
           a.ocp_names == b.ocp_names && a.covariate_names == b.covariate_names;
  }
};

inline std::vector<std::string> numbered_names(const std::string& prefix, Index count) {
  std::vector<std::string> out;
  for (Index j = 0; j < count; ++j) out.push_back(prefix + std::to_string(j + 1));
  return out;
}

/// Builds a Dataset with default column names Z1.., W1.., X1...
inline Dataset make_dataset(Vector y, Vector d, Matrix z, Matrix w, Matrix x = Matrix()) {
  Dataset ds;
  ds.outcome = std::move(y);
  ds.treatment = std::move(d);
  ds.tcp = std::move(z);
  ds.ocp = std::move(w);
  if (x.size() == 0) x = Matrix::Zero(ds.outcome.size(), 0);
  ds.covariates = std::move(x);
  ds.tcp_names = numbered_names("Z", ds.p_z());
  ds.ocp_names = numbered_names("W", ds.p_w());
  ds.covariate_names = numbered_names("X", ds.p_x());
  ds.validate();
  return ds;
}

/// Appends a column of ones to the covariates.
inline void add_intercept(Dataset& ds) {
  Matrix x(ds.n(), ds.p_x() + 1);
  if (ds.p_x() > 0) x.leftCols(ds.p_x()) = ds.covariates;
  x.col(ds.p_x()).setOnes();
  ds.covariates = std::move(x);
  ds.covariate_names.emplace_back(kInterceptName);
}

}  // namespace proxsel
