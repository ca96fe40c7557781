#pragma once

// Identification checks (subset consistency, majority rule) and design
// diagnostics (irrepresentable value, restricted isometry constants).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "proxsel/error.hpp"
#include "proxsel/linalg.hpp"

namespace proxsel {

enum class IdentificationMethod { theorem1, majority_rule };

inline constexpr const char* to_string(IdentificationMethod m) noexcept {
  return m == IdentificationMethod::theorem1 ? "theorem1" : "majority_rule";
}

struct ConsistentSubset {
  IndexSet members;
  double q = 0.0;
  friend bool operator==(const ConsistentSubset&, const ConsistentSubset&) = default;
};

struct IdentificationReport {
  bool identified = false;
  IdentificationMethod method = IdentificationMethod::theorem1;
  Index subset_size = 0;
  /// consistent subsets found, in lexicographic order
  std::vector<ConsistentSubset> subsets;
  Index distinct_q_count = 0;
  /// distinct constants in first-seen order
  std::vector<double> distinct_q;
  /// false if the scan stopped early at the second distinct constant
  bool enumeration_complete = true;
  friend bool operator==(const IdentificationReport&, const IdentificationReport&) = default;
};

inline void check_bound(Index p_z, Index bound) {
  if (p_z < 1 || bound < 1 || bound > p_z) {
    std::ostringstream msg;
    msg << "invalid-proxy bound I = " << bound << " must lie in [1, " << p_z << "]";
    fail(ErrorKind::InvalidBound, msg.str());
  }
}

/// Majority rule: at most half of the candidates may be invalid.
inline bool check_majority_rule(Index p_z, Index bound) {
  check_bound(p_z, bound);
  return 2 * bound <= p_z;
}

inline double binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (Index i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(c);
}

/// Advances comb to the next k-combination of {0..n-1} in lexicographic
/// order. Returns false after the last one.
inline bool next_combination(IndexSet& comb, Index n) {
  const Index k = static_cast<Index>(comb.size());
  Index i = k - 1;
  while (i >= 0 && comb[static_cast<std::size_t>(i)] == n - k + i) --i;
  if (i < 0) return false;
  ++comb[static_cast<std::size_t>(i)];
  for (Index j = i + 1; j < k; ++j)
    comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
  return true;
}

struct Theorem1Options {
  double tol = 1e-6;
  /// keep scanning after the second distinct q up to this p_z
  Index full_list_max_p = 12;
  double max_subsets = 1e7;
};

/// Scans every subset of size p_z - I + 1 for a common ratio q with
/// delta_j * q = gamma_j on the subset. Identified iff at most one such q.
inline IdentificationReport check_theorem1(const Vector& delta, const Vector& gamma, Index bound,
                                           const Theorem1Options& opt = {}) {
  const Index p = delta.size();
  if (gamma.size() != p) fail(ErrorKind::InvalidArgument, "delta and gamma lengths differ");
  check_bound(p, bound);
  if (!delta.allFinite() || !gamma.allFinite())
    fail(ErrorKind::InvalidArgument, "delta and gamma must be finite");
  {
    std::ostringstream bad;
    bool any = false;
    for (Index j = 0; j < p; ++j)
      if (std::abs(delta(j)) <= opt.tol) {
        bad << (any ? ", " : "") << j;
        any = true;
      }
    if (any) fail(ErrorKind::AssumptionViolation, "|delta_j| <= tol at indices " + bad.str());
  }

  IdentificationReport rep;
  rep.method = IdentificationMethod::theorem1;
  rep.subset_size = p - bound + 1;
  const double count = binomial(p, rep.subset_size);
  if (count > opt.max_subsets) {
    std::ostringstream msg;
    msg << "C(" << p << "," << rep.subset_size << ") = " << count << " subsets exceeds limit "
        << opt.max_subsets;
    fail(ErrorKind::CombinatorialBlowup, msg.str());
  }
  const bool keep_all = p <= opt.full_list_max_p;
  auto close = [&](double a, double b) { return std::abs(a - b) <= opt.tol * std::max(1.0, std::abs(b)); };

  IndexSet comb(static_cast<std::size_t>(rep.subset_size));
  std::iota(comb.begin(), comb.end(), Index{0});
  do {
    double num = 0.0, den = 0.0;
    for (Index j : comb) {
      num += delta(j) * gamma(j);
      den += delta(j) * delta(j);
    }
    const double q = num / den;
    bool consistent = true;
    for (Index j : comb)
      if (!close(delta(j) * q, gamma(j))) {
        consistent = false;
        break;
      }
    if (!consistent) continue;
    rep.subsets.push_back({comb, q});
    const bool seen = std::any_of(rep.distinct_q.begin(), rep.distinct_q.end(),
                                  [&](double v) { return close(q, v); });
    if (!seen) rep.distinct_q.push_back(q);
    if (rep.distinct_q.size() >= 2 && !keep_all) {
      rep.enumeration_complete = false;
      break;
    }
  } while (next_combination(comb, p));

  rep.distinct_q_count = static_cast<Index>(rep.distinct_q.size());
  rep.identified = rep.distinct_q_count <= 1;
  return rep;
}

/// Majority-rule shortcut first, full scan otherwise.
inline IdentificationReport identify(const Vector& delta, const Vector& gamma, Index bound,
                                     const Theorem1Options& opt = {}) {
  if (check_majority_rule(delta.size(), bound)) {
    IdentificationReport rep;
    rep.identified = true;
    rep.method = IdentificationMethod::majority_rule;
    rep.subset_size = delta.size() - bound + 1;
    rep.enumeration_complete = false;
    return rep;
  }
  return check_theorem1(delta, gamma, bound, opt);
}

struct IrrepresentableResult {
  double value = 0.0;
  bool holds = false;
  friend bool operator==(const IrrepresentableResult&, const IrrepresentableResult&) = default;
};

/// || C_{A^c A} C_{AA}^{-1} s ||_inf with C = X^T X / n.
inline IrrepresentableResult irrepresentable_diagnostic(const Matrix& design, const IndexSet& invalid,
                                                        const Vector& signs,
                                                        double eig_floor = 1e-10) {
  const Index p = design.cols();
  if (invalid.empty() || static_cast<Index>(invalid.size()) >= p)
    fail(ErrorKind::InvalidArgument, "invalid set must be nonempty and proper");
  if (signs.size() != static_cast<Index>(invalid.size()))
    fail(ErrorKind::InvalidArgument, "sign vector length must match invalid set");
  std::vector<bool> in(static_cast<std::size_t>(p), false);
  for (Index j : invalid) {
    if (j < 0 || j >= p) fail(ErrorKind::InvalidArgument, "invalid set index out of range");
    in[static_cast<std::size_t>(j)] = true;
  }
  IndexSet rest;
  for (Index j = 0; j < p; ++j)
    if (!in[static_cast<std::size_t>(j)]) rest.push_back(j);

  const double n = static_cast<double>(design.rows());
  const Matrix za = select_columns(design, invalid);
  const Matrix zc = select_columns(design, rest);
  const Matrix caa = za.transpose() * za / n;
  const Matrix cca = zc.transpose() * za / n;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(caa, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues()(0) > eig_floor))
    fail(ErrorKind::SingularBlock, "C_AA is singular (smallest eigenvalue <= floor)");
  const Vector v = cca * caa.ldlt().solve(signs);
  IrrepresentableResult r;
  r.value = v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
  r.holds = r.value < 1.0;
  return r;
}

struct RipConstants {
  Index order = 0;
  double lower = 0.0;  // delta^- : smallest restricted eigenvalue
  double upper = 0.0;  // delta^+ : largest restricted eigenvalue
  friend bool operator==(const RipConstants&, const RipConstants&) = default;
};

inline constexpr double kRipMaxSupports = 1e6;

/// Brute force over all size-k supports.
inline RipConstants rip_constants(const Matrix& design, Index k, double max_supports = kRipMaxSupports) {
  const Index p = design.cols();
  if (k < 1 || k > p) {
    std::ostringstream msg;
    msg << "sparsity k = " << k << " must lie in [1, " << p << "]";
    fail(ErrorKind::InvalidArgument, msg.str());
  }
  const double count = binomial(p, k);
  if (count > max_supports) {
    std::ostringstream msg;
    msg << "C(" << p << "," << k << ") = " << static_cast<long long>(count)
        << " supports exceeds limit " << static_cast<long long>(max_supports);
    fail(ErrorKind::CombinatorialBlowup, msg.str());
  }
  const Matrix gram = design.transpose() * design;
  RipConstants out;
  out.order = k;
  out.lower = std::numeric_limits<double>::infinity();
  out.upper = 0.0;
  IndexSet comb(static_cast<std::size_t>(k));
  std::iota(comb.begin(), comb.end(), Index{0});
  Matrix sub(k, k);
  do {
    for (Index a = 0; a < k; ++a)
      for (Index b = 0; b < k; ++b) sub(a, b) = gram(comb[a], comb[b]);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sub, Eigen::EigenvaluesOnly);
    out.lower = std::min(out.lower, std::max(0.0, eig.eigenvalues()(0)));
    out.upper = std::max(out.upper, std::max(0.0, eig.eigenvalues()(k - 1)));
  } while (next_combination(comb, p));
  return out;
}

struct Theorem3Report {
  RipConstants z;
  RipConstants z_on_what;    // P_W Z
  RipConstants z_on_dtilde;  // P_D Z
  double margin = 0.0;
  bool holds = false;
  friend bool operator==(const Theorem3Report&, const Theorem3Report&) = default;
};

/// Recovery margin 2 d-(Z) - d+(Z) - 2 d+(P_W Z) - 2 d+(P_D Z) at order 2 s_z.
inline Theorem3Report theorem3_condition(const Matrix& z, const Matrix& what, const Vector& d_tilde,
                                         Index s_z, double max_supports = kRipMaxSupports) {
  if (s_z < 1 || 2 * s_z > z.cols()) {
    std::ostringstream msg;
    msg << "need 1 <= s_z and 2*s_z <= p_z (s_z = " << s_z << ", p_z = " << z.cols() << ")";
    fail(ErrorKind::InvalidArgument, msg.str());
  }
  const Index k = 2 * s_z;
  Theorem3Report r;
  r.z = rip_constants(z, k, max_supports);
  r.z_on_what = rip_constants(project(what, z), k, max_supports);
  r.z_on_dtilde = rip_constants(project(Matrix(d_tilde), z), k, max_supports);
  r.margin = 2.0 * r.z.lower - r.z.upper - 2.0 * r.z_on_what.upper - 2.0 * r.z_on_dtilde.upper;
  r.holds = r.margin > 0.0;
  return r;
}

struct DiagnosticReport {
  std::optional<IrrepresentableResult> irrepresentable;
  std::optional<Theorem3Report> theorem3;
  std::optional<RipConstants> rip;
  friend bool operator==(const DiagnosticReport&, const DiagnosticReport&) = default;
};

}  // namespace proxsel
