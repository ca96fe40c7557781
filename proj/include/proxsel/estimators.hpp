#pragma once

// Causal-effect estimators with possibly invalid proxies.
//
// Notation: Y outcome, D treatment, Z candidate TCPs, W candidate OCPs,
// X covariates, M = (Z, D, X) the first-stage design, W_hat = P_M W_k.

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "proxsel/dataset.hpp"
#include "proxsel/error.hpp"
#include "proxsel/lasso.hpp"
#include "proxsel/linalg.hpp"
#include "proxsel/parallel.hpp"

namespace proxsel {

enum class LambdaMode { rate, cv, fixed };

inline constexpr const char* to_string(LambdaMode m) noexcept {
  switch (m) {
    case LambdaMode::rate: return "rate";
    case LambdaMode::cv: return "cv";
    case LambdaMode::fixed: return "fixed";
  }
  return "?";
}

struct LambdaRule {
  LambdaMode mode = LambdaMode::rate;
  /// fixed: the penalty itself. rate: the constant c in c*sqrt(n)/log(n),
  /// where 0 means the sample standard deviation of Y.
  double value = 0.0;
  friend bool operator==(const LambdaRule&, const LambdaRule&) = default;
};

struct EstimatorConfig {
  LambdaRule adaptive_lambda{LambdaMode::rate, 0.0};
  LambdaRule lasso_lambda{LambdaMode::cv, 0.0};
  double alpha_level = 0.05;
  double rank_tol = kDefaultRankTol;
  double delta_floor = 1e-10;
  /// |delta_j| below weak_tol * median|delta| draws a warning
  double weak_tol = 0.05;
  double adaptive_floor = 1e-8;
  int cv_folds = 10;
  int cv_grid = 50;
  double cv_min_ratio = 1e-4;
  /// take the largest lambda within one SE of the CV minimum instead of the minimum
  bool cv_one_se = false;
  LassoOptions lasso{};
  /// workers for the per-OCP loop; results do not depend on it
  unsigned threads = 1;
};

struct FirstStage {
  Index ocp_index = 0;
  Index p_z = 0;
  Vector what;       // W_hat
  Vector gamma_hat;  // coefficients of Y on M, ordered (Z, D, X)
  Vector delta_hat;  // coefficients of W_k on M
};

/// One row of a per-OCP summary.
struct OcpRun {
  Index ocp_index = 0;
  std::string ocp_name;
  bool ok = false;
  std::string error;
  double beta_hat = 0.0;
  IndexSet selected_invalid_tcps;
  std::vector<std::string> invalid_tcps;
  std::vector<std::string> valid_tcps;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  friend bool operator==(const OcpRun&, const OcpRun&) = default;
};

struct ProxyEstimate {
  std::string method;
  Index n = 0;
  double beta_hat = 0.0;
  /// coefficient on W_hat in the second stage
  double gamma_hat = 0.0;
  /// length p_z, zero off the selected set
  std::vector<double> alpha_hat;
  IndexSet selected_invalid_tcps;
  /// asymptotic variance of sqrt(n) (beta_hat - beta)
  std::optional<double> variance;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  std::optional<double> lambda;
  std::optional<Index> ocp_index;
  std::vector<double> per_ocp_estimates;
  std::vector<OcpRun> per_ocp;
  std::vector<std::string> warnings;
  friend bool operator==(const ProxyEstimate&, const ProxyEstimate&) = default;
};

// ---------------------------------------------------------------------------
// small helpers

/// Median; even counts average the two central order statistics.
inline double median_of(std::vector<double> v) {
  if (v.empty()) fail(ErrorKind::InvalidArgument, "median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double sample_sd(const Vector& v) {
  const Index n = v.size();
  if (n < 2) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n - 1));
}

inline void check_alpha_level(double a) {
  if (!(a > 0.0 && a < 1.0)) fail(ErrorKind::InvalidArgument, "alpha_level must lie in (0, 1)");
}

inline void check_ocp(const Dataset& data, Index ocp) {
  if (ocp < 0 || ocp >= data.p_w()) {
    std::ostringstream msg;
    msg << "OCP index " << ocp << " out of range [0, " << data.p_w() << ")";
    fail(ErrorKind::InvalidArgument, msg.str());
  }
}

inline void check_selected(const Dataset& data, const IndexSet& selected) {
  for (std::size_t k = 0; k < selected.size(); ++k) {
    if (selected[k] < 0 || selected[k] >= data.p_z())
      fail(ErrorKind::InvalidArgument, "selected TCP index out of range");
    if (k > 0 && selected[k] <= selected[k - 1])
      fail(ErrorKind::InvalidArgument, "selected TCP indices must be sorted and unique");
  }
}

// ---------------------------------------------------------------------------
// first stage

/// Regresses Y and every OCP column on M = (Z, D, X) with one factorization.
inline std::vector<FirstStage> first_stage_all(const Dataset& data, double rank_tol = kDefaultRankTol) {
  data.validate();
  const Projector pm(data.first_stage_design(), rank_tol);
  const Vector gamma = pm.coefficients(data.outcome);
  const Matrix delta = pm.coefficients(data.ocp);
  const Matrix what = pm.project(data.ocp);
  std::vector<FirstStage> out(static_cast<std::size_t>(data.p_w()));
  for (Index k = 0; k < data.p_w(); ++k) {
    auto& fs = out[static_cast<std::size_t>(k)];
    fs.ocp_index = k;
    fs.p_z = data.p_z();
    fs.what = what.col(k);
    fs.gamma_hat = gamma;
    fs.delta_hat = delta.col(k);
  }
  return out;
}

inline FirstStage first_stage(const Dataset& data, Index ocp, double rank_tol = kDefaultRankTol) {
  check_ocp(data, ocp);
  data.validate();
  const Projector pm(data.first_stage_design(), rank_tol);
  FirstStage fs;
  fs.ocp_index = ocp;
  fs.p_z = data.p_z();
  fs.what = pm.project(data.ocp.col(ocp));
  fs.gamma_hat = pm.coefficients(data.outcome);
  fs.delta_hat = pm.coefficients(data.ocp.col(ocp));
  return fs;
}

/// Median over TCPs of Gamma_j / delta_j.
inline double median_gamma(const FirstStage& fs, double delta_floor = 1e-10, double weak_tol = 0.05,
                           std::vector<std::string>* warnings = nullptr) {
  const Index p = fs.p_z;
  if (p < 1) fail(ErrorKind::InvalidArgument, "median_gamma needs at least one TCP");
  if (fs.gamma_hat.size() < p || fs.delta_hat.size() < p)
    fail(ErrorKind::InvalidArgument, "first-stage vectors shorter than p_z");
  std::ostringstream bad;
  bool any_bad = false;
  std::vector<double> ratios, mags;
  for (Index j = 0; j < p; ++j) {
    const double d = fs.delta_hat(j);
    if (!(std::abs(d) > delta_floor)) {
      bad << (any_bad ? ", " : "") << j;
      any_bad = true;
      continue;
    }
    ratios.push_back(fs.gamma_hat(j) / d);
    mags.push_back(std::abs(d));
  }
  if (any_bad)
    fail(ErrorKind::AssumptionViolation, "first-stage OCP coefficient below floor for TCP index " + bad.str());
  if (warnings != nullptr) {
    const double cut = weak_tol * median_of(mags);
    for (Index j = 0; j < p; ++j)
      if (std::abs(fs.delta_hat(j)) < cut) {
        std::ostringstream w;
        w << "weak first-stage coefficient for TCP " << j << " (|delta| = " << std::abs(fs.delta_hat(j))
          << ")";
        warnings->push_back(w.str());
      }
  }
  return median_of(std::move(ratios));
}

/// alpha_m = Gamma_Z - gamma_m * delta_Z
inline Vector alpha_median(const FirstStage& fs, double gamma_m) {
  return fs.gamma_hat.head(fs.p_z) - gamma_m * fs.delta_hat.head(fs.p_z);
}

// ---------------------------------------------------------------------------
// reduced problem

struct ReducedDesign {
  Vector d_tilde;   // P_{Q perp} D, Q = (W_hat, X)
  Matrix z_tilde;   // P_{Q perp} Z
  Matrix design;    // P_{D_tilde perp} Z_tilde
  Vector response;  // Y residualized on (Q, D); same minimizer as Y, used for cv
};

inline ReducedDesign reduced_design(const Dataset& data, const FirstStage& fs,
                                    double rank_tol = kDefaultRankTol) {
  const Matrix x = data.covariates_or_empty();
  const Projector pq(hcat({Matrix(fs.what), x}), rank_tol);
  ReducedDesign r;
  r.d_tilde = pq.residual(data.treatment);
  const double dd = r.d_tilde.squaredNorm();
  if (!(dd >= 1e-12 * data.treatment.squaredNorm()) || dd == 0.0)
    fail(ErrorKind::DegenerateTreatment, "treatment is (nearly) spanned by the fitted OCP and covariates");
  r.z_tilde = pq.residual(data.tcp);
  r.design = r.z_tilde - r.d_tilde * ((r.d_tilde.transpose() * r.z_tilde) / dd);
  const Vector y_q = pq.residual(data.outcome);
  r.response = y_q - r.d_tilde * (r.d_tilde.dot(y_q) / dd);
  return r;
}

inline double beta_from_alpha(const Vector& y, const ReducedDesign& r, const Vector& alpha) {
  return r.d_tilde.dot(y - r.z_tilde * alpha) / r.d_tilde.squaredNorm();
}

inline double rate_lambda(Index n, double c) {
  if (n < 2) fail(ErrorKind::InvalidArgument, "rate lambda needs n >= 2");
  const double nn = static_cast<double>(n);
  return c * std::sqrt(nn) / std::log(nn);
}

inline double resolve_lambda(const Dataset& data, const ReducedDesign& r, const Vector& weights,
                             const LambdaRule& rule, const EstimatorConfig& cfg) {
  switch (rule.mode) {
    case LambdaMode::fixed:
      if (!(rule.value >= 0.0)) fail(ErrorKind::InvalidArgument, "fixed lambda must be >= 0");
      return rule.value;
    case LambdaMode::rate:
      return rate_lambda(data.n(), rule.value > 0.0 ? rule.value : sample_sd(data.outcome));
    case LambdaMode::cv:
      if (data.n() < 20) fail(ErrorKind::InvalidArgument, "cv lambda selection needs n >= 20");
    {
      const CvResult cv =
          lasso_cv(r.design, r.response, weights, cfg.cv_folds, cfg.cv_grid, cfg.cv_min_ratio, cfg.lasso);
      return cfg.cv_one_se ? cv.lambda_1se : cv.lambda;
    }
  }
  return 0.0;
}

/// Lambda for the reduced LASSO problem of one OCP. Plain weights for mode
/// rate/cv; adaptive weights are applied inside adaptive_lasso_proximal.
inline double select_lambda(const Dataset& data, Index ocp, LambdaMode mode, const EstimatorConfig& cfg = {}) {
  const FirstStage fs = first_stage(data, ocp, cfg.rank_tol);
  const ReducedDesign r = reduced_design(data, fs, cfg.rank_tol);
  return resolve_lambda(data, r, Vector::Ones(data.p_z()), LambdaRule{mode, 0.0}, cfg);
}

struct LassoProximalResult {
  Vector alpha_hat;
  double beta_hat = 0.0;
  double lambda = 0.0;
  LassoFit fit;
};

/// Two-step penalized estimator: LASSO for alpha on the reduced design, then
/// the closed-form beta.
inline LassoProximalResult lasso_proximal(const Dataset& data, Index ocp, double lambda,
                                          const EstimatorConfig& cfg = {}) {
  const FirstStage fs = first_stage(data, ocp, cfg.rank_tol);
  const ReducedDesign r = reduced_design(data, fs, cfg.rank_tol);
  LassoProximalResult out;
  out.lambda = lambda;
  out.fit = lasso_solve(r.design, data.outcome, lambda, Vector::Ones(data.p_z()), cfg.lasso);
  out.alpha_hat = out.fit.coefficients;
  out.beta_hat = beta_from_alpha(data.outcome, r, out.alpha_hat);
  return out;
}

inline LassoProximalResult lasso_proximal(const Dataset& data, Index ocp, const EstimatorConfig& cfg = {}) {
  const FirstStage fs = first_stage(data, ocp, cfg.rank_tol);
  const ReducedDesign r = reduced_design(data, fs, cfg.rank_tol);
  const double lambda = resolve_lambda(data, r, Vector::Ones(data.p_z()), cfg.lasso_lambda, cfg);
  return lasso_proximal(data, ocp, lambda, cfg);
}

struct AdaptiveSelection {
  Vector alpha_ad;
  IndexSet selected;
  Vector weights;
  Vector alpha_initial;  // alpha_m
  double gamma_median = 0.0;
  double lambda = 0.0;
  LassoFit fit;
  std::vector<std::string> warnings;
};

inline Vector adaptive_weights(const Vector& alpha_m, double floor) {
  if (!alpha_m.allFinite())
    fail(ErrorKind::AssumptionViolation, "initial alpha estimate has non-finite entries");
  Vector w(alpha_m.size());
  for (Index j = 0; j < w.size(); ++j) w(j) = 1.0 / std::max(std::abs(alpha_m(j)), floor);
  return w;
}

inline IndexSet support_of(const Vector& v) {
  IndexSet s;
  for (Index j = 0; j < v.size(); ++j)
    if (v(j) != 0.0) s.push_back(j);
  return s;
}

namespace detail {

inline AdaptiveSelection adaptive_from_first_stage(const Dataset& data, const FirstStage& fs,
                                                   std::optional<double> lambda_n,
                                                   const EstimatorConfig& cfg) {
  AdaptiveSelection sel;
  sel.gamma_median = median_gamma(fs, cfg.delta_floor, cfg.weak_tol, &sel.warnings);
  sel.alpha_initial = alpha_median(fs, sel.gamma_median);
  sel.weights = adaptive_weights(sel.alpha_initial, cfg.adaptive_floor);
  const ReducedDesign r = reduced_design(data, fs, cfg.rank_tol);
  sel.lambda = lambda_n ? *lambda_n : resolve_lambda(data, r, sel.weights, cfg.adaptive_lambda, cfg);
  if (!(sel.lambda >= 0.0)) fail(ErrorKind::InvalidArgument, "lambda_n must be >= 0");
  sel.fit = lasso_solve(r.design, data.outcome, sel.lambda, sel.weights, cfg.lasso);
  sel.alpha_ad = sel.fit.coefficients;
  sel.selected = support_of(sel.alpha_ad);
  return sel;
}

}  // namespace detail

/// Adaptive LASSO on the reduced design with weights 1/|alpha_m|. When
/// lambda_n is absent the configured rule picks it.
inline AdaptiveSelection adaptive_lasso_proximal(const Dataset& data, Index ocp,
                                                 std::optional<double> lambda_n,
                                                 const EstimatorConfig& cfg = {}) {
  const FirstStage fs = first_stage(data, ocp, cfg.rank_tol);
  return detail::adaptive_from_first_stage(data, fs, lambda_n, cfg);
}

// ---------------------------------------------------------------------------
// second stage

/// Sample analog of the oracle asymptotic variance, term by term:
///   s2 * (Edd + a - 2 b) / (Edd - a)^2
///   a = E_dN E_NN^-1 E_NM E_MM^-1 E_MN E_NN^-1 E_Nd
///   b = E_dN E_NN^-1 E_NM E_MM^-1 E_Md
inline double oracle_variance_plugin(const Vector& d, const Matrix& nhat, const Matrix& m, double sigma2_eps) {
  const double n = static_cast<double>(d.size());
  const double edd = d.squaredNorm() / n;
  const Matrix enn = nhat.transpose() * nhat / n;
  const Vector end = nhat.transpose() * d / n;
  const Matrix enm = nhat.transpose() * m / n;
  const Matrix emm = m.transpose() * m / n;
  const Vector emd = m.transpose() * d / n;
  const Eigen::LDLT<Matrix> enn_f(enn);
  const Eigen::LDLT<Matrix> emm_f(emm);
  const Vector v = enm.transpose() * enn_f.solve(end);  // E_MN E_NN^-1 E_Nd
  const double a = v.dot(emm_f.solve(v));
  const double b = v.dot(emm_f.solve(emd));
  const double denom = edd - a;
  if (!(denom > 0.0)) fail(ErrorKind::RankDeficient, "treatment is absorbed by the adjustment set");
  return sigma2_eps * (edd + a - 2.0 * b) / (denom * denom);
}

namespace detail {

// 2SLS of Y on (D, Z_S, W_hat, X) with the ratio-form beta. The error
// variance comes from residuals with W_hat, or with the observed OCP column
// when `observed` is given (the conventional 2SLS residual).
inline ProxyEstimate second_stage(const Dataset& data, const Vector& what, const IndexSet& selected,
                                  double alpha_level, double rank_tol, std::string method,
                                  const Vector* observed = nullptr) {
  check_alpha_level(alpha_level);
  check_selected(data, selected);
  const Index n = data.n();
  const Matrix zs = select_columns(data.tcp, selected);
  const Matrix x = data.covariates_or_empty();
  const Matrix nhat = hcat({zs, Matrix(what), x});
  const Projector pn(nhat, rank_tol);
  const Vector dperp = pn.residual(data.treatment);
  const double denom = dperp.dot(data.treatment);
  if (!(denom > 1e-12 * data.treatment.squaredNorm()))
    fail(ErrorKind::RankDeficient, "treatment is absorbed by (Z_selected, W_hat, X)");

  ProxyEstimate est;
  est.method = std::move(method);
  est.n = n;
  est.beta_hat = dperp.dot(data.outcome) / denom;

  const Matrix full = hcat({Matrix(data.treatment), nhat});
  const OlsFit fit = ols(full, data.outcome, rank_tol);
  est.alpha_hat.assign(static_cast<std::size_t>(data.p_z()), 0.0);
  for (std::size_t k = 0; k < selected.size(); ++k)
    est.alpha_hat[static_cast<std::size_t>(selected[k])] = fit.coefficients(1 + static_cast<Index>(k));
  est.gamma_hat = fit.coefficients(1 + static_cast<Index>(selected.size()));
  est.selected_invalid_tcps = selected;

  double s2 = fit.residual_variance;
  if (observed) s2 = (fit.residuals - (*observed - what) * est.gamma_hat).squaredNorm() / static_cast<double>(n);
  const double var = oracle_variance_plugin(data.treatment, nhat, data.first_stage_design(), s2);
  est.variance = var;
  const double half = normal_quantile(1.0 - alpha_level / 2.0) * std::sqrt(var / static_cast<double>(n));
  est.ci_lower = est.beta_hat - half;
  est.ci_upper = est.beta_hat + half;
  return est;
}

}  // namespace detail

inline ProxyEstimate post_adaptive_2sls(const Dataset& data, Index ocp, const IndexSet& selected,
                                        double alpha_level = 0.05, double rank_tol = kDefaultRankTol) {
  const FirstStage fs = first_stage(data, ocp, rank_tol);
  ProxyEstimate est = detail::second_stage(data, fs.what, selected, alpha_level, rank_tol, "post_adaptive_2sls");
  est.ocp_index = ocp;
  return est;
}

/// P2SLS with the invalid TCP set known.
inline ProxyEstimate oracle_p2sls(const Dataset& data, const IndexSet& true_invalid, double alpha_level = 0.05,
                                  Index ocp = 0, double rank_tol = kDefaultRankTol) {
  const FirstStage fs = first_stage(data, ocp, rank_tol);
  ProxyEstimate est = detail::second_stage(data, fs.what, true_invalid, alpha_level, rank_tol, "oracle");
  est.ocp_index = ocp;
  return est;
}

/// P2SLS treating every TCP as valid. Reported like an off-the-shelf 2SLS
/// fit: residuals use the observed OCP, not its fitted value.
inline ProxyEstimate naive_p2sls(const Dataset& data, Index ocp = 0, double alpha_level = 0.05,
                                 double rank_tol = kDefaultRankTol) {
  const FirstStage fs = first_stage(data, ocp, rank_tol);
  const Vector w = data.ocp.col(ocp);
  ProxyEstimate est = detail::second_stage(data, fs.what, {}, alpha_level, rank_tol, "naive_p2sls", &w);
  est.ocp_index = ocp;
  return est;
}

/// OLS of Y on (D, X), ignoring every proxy.
inline ProxyEstimate ols_baseline(const Dataset& data, double alpha_level = 0.05,
                                  double rank_tol = kDefaultRankTol) {
  check_alpha_level(alpha_level);
  data.validate();
  const Matrix x = data.covariates_or_empty();
  const Matrix design = hcat({Matrix(data.treatment), x});
  const OlsFit fit = ols(design, data.outcome, rank_tol);
  const Vector dperp = x.cols() > 0 ? Vector(residual_project(x, data.treatment, rank_tol)) : data.treatment;
  const double n = static_cast<double>(data.n());
  ProxyEstimate est;
  est.method = "ols";
  est.n = data.n();
  est.beta_hat = fit.coefficients(0);
  est.alpha_hat.assign(static_cast<std::size_t>(data.p_z()), 0.0);
  est.variance = fit.residual_variance / (dperp.squaredNorm() / n);
  const double half = normal_quantile(1.0 - alpha_level / 2.0) * std::sqrt(*est.variance / n);
  est.ci_lower = est.beta_hat - half;
  est.ci_upper = est.beta_hat + half;
  return est;
}

// ---------------------------------------------------------------------------
// full pipelines

namespace detail {

inline ProxyEstimate adaptive_pipeline(const Dataset& data, const FirstStage& fs, const EstimatorConfig& cfg) {
  AdaptiveSelection sel = adaptive_from_first_stage(data, fs, std::nullopt, cfg);
  ProxyEstimate est = second_stage(data, fs.what, sel.selected, cfg.alpha_level, cfg.rank_tol, "adaptive_proximal");
  est.lambda = sel.lambda;
  est.ocp_index = fs.ocp_index;
  est.warnings = std::move(sel.warnings);
  return est;
}

}  // namespace detail

/// Single designated OCP: first stage, median-ratio initial estimate,
/// adaptive LASSO selection, post-selection 2SLS with closed-form CI.
inline ProxyEstimate estimate_invalid_tcp(const Dataset& data, Index ocp, const EstimatorConfig& cfg = {}) {
  return detail::adaptive_pipeline(data, first_stage(data, ocp, cfg.rank_tol), cfg);
}

inline OcpRun summarize_run(const Dataset& data, Index ocp, const ProxyEstimate& est) {
  OcpRun row;
  row.ocp_index = ocp;
  row.ocp_name = data.ocp_names.at(static_cast<std::size_t>(ocp));
  row.ok = true;
  row.beta_hat = est.beta_hat;
  row.selected_invalid_tcps = est.selected_invalid_tcps;
  std::vector<bool> invalid(static_cast<std::size_t>(data.p_z()), false);
  for (Index j : est.selected_invalid_tcps) invalid[static_cast<std::size_t>(j)] = true;
  for (Index j = 0; j < data.p_z(); ++j)
    (invalid[static_cast<std::size_t>(j)] ? row.invalid_tcps : row.valid_tcps)
        .push_back(data.tcp_names.at(static_cast<std::size_t>(j)));
  row.ci_lower = est.ci_lower;
  row.ci_upper = est.ci_upper;
  return row;
}

/// Smallest number of successful OCP runs the median needs: a strict majority.
inline Index required_ocp_successes(Index p_w) { return p_w / 2 + 1; }

/// Runs the single-OCP pipeline for every OCP column and takes the median of
/// the successful estimates. No closed-form CI; see subsample_ci.
inline ProxyEstimate estimate_invalid_tcp_ocp(const Dataset& data, const EstimatorConfig& cfg = {}) {
  const std::vector<FirstStage> stages = first_stage_all(data, cfg.rank_tol);
  const Index pw = data.p_w();
  std::vector<std::optional<ProxyEstimate>> runs(static_cast<std::size_t>(pw));
  std::vector<std::string> errors(static_cast<std::size_t>(pw));
  parallel_for(static_cast<std::size_t>(pw), cfg.threads, [&](std::size_t k) {
    try {
      runs[k] = detail::adaptive_pipeline(data, stages[k], cfg);
    } catch (const Error& e) {
      errors[k] = e.what();
    }
  });

  ProxyEstimate out;
  out.method = "median_ocp";
  out.n = data.n();
  std::vector<double> ok;
  for (Index k = 0; k < pw; ++k) {
    const auto& r = runs[static_cast<std::size_t>(k)];
    if (r) {
      ok.push_back(r->beta_hat);
      out.per_ocp_estimates.push_back(r->beta_hat);
      out.per_ocp.push_back(summarize_run(data, k, *r));
      for (const auto& w : r->warnings) out.warnings.push_back(data.ocp_names[static_cast<std::size_t>(k)] + ": " + w);
    } else {
      out.per_ocp_estimates.push_back(std::nan(""));
      OcpRun row;
      row.ocp_index = k;
      row.ocp_name = data.ocp_names[static_cast<std::size_t>(k)];
      row.error = errors[static_cast<std::size_t>(k)];
      out.per_ocp.push_back(std::move(row));
    }
  }
  const Index need = required_ocp_successes(pw);
  if (static_cast<Index>(ok.size()) < need) {
    std::ostringstream msg;
    msg << ok.size() << " of " << pw << " OCP runs succeeded, need " << need;
    fail(ErrorKind::AggregateFailure, msg.str());
  }
  out.beta_hat = median_of(ok);
  out.alpha_hat.assign(static_cast<std::size_t>(data.p_z()), 0.0);
  return out;
}

/// Pools the TCP and OCP columns into one proxy list; each proxy takes a turn
/// as the OCP while all the others serve as candidate TCPs.
struct RotationResult {
  std::vector<OcpRun> rows;
  std::optional<double> median_beta;
};

inline RotationResult rotate_ocp(const Dataset& data, const EstimatorConfig& cfg = {}) {
  const Matrix proxies = hcat({data.tcp, data.ocp});
  std::vector<std::string> names = data.tcp_names;
  names.insert(names.end(), data.ocp_names.begin(), data.ocp_names.end());
  const Index p = proxies.cols();
  if (p < 2) fail(ErrorKind::InvalidArgument, "rotation needs at least two proxy columns");
  RotationResult out;
  out.rows.resize(static_cast<std::size_t>(p));
  parallel_for(static_cast<std::size_t>(p), cfg.threads, [&](std::size_t k) {
    const auto kk = static_cast<Index>(k);
    Dataset d;
    d.outcome = data.outcome;
    d.treatment = data.treatment;
    d.covariates = data.covariates_or_empty();
    d.covariate_names = data.covariate_names;
    d.ocp = proxies.col(kk);
    d.ocp_names = {names[k]};
    d.tcp.resize(data.n(), p - 1);
    for (Index j = 0, c = 0; j < p; ++j) {
      if (j == kk) continue;
      d.tcp.col(c++) = proxies.col(j);
      d.tcp_names.push_back(names[static_cast<std::size_t>(j)]);
    }
    EstimatorConfig inner = cfg;
    inner.threads = 1;
    try {
      out.rows[k] = summarize_run(d, 0, estimate_invalid_tcp(d, 0, inner));
    } catch (const Error& e) {
      OcpRun row;
      row.ocp_name = d.ocp_names[0];
      row.error = e.what();
      out.rows[k] = std::move(row);
    }
    out.rows[k].ocp_index = kk;
  });
  std::vector<double> ok;
  for (const auto& r : out.rows)
    if (r.ok) ok.push_back(r.beta_hat);
  if (!ok.empty()) out.median_beta = median_of(ok);
  return out;
}

}  // namespace proxsel
