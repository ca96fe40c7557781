#pragma once

// Synthetic data with a hidden confounder U and Monte Carlo studies.
//
//   Z_ij = c + U_i + e_ij
//   D_i  = c + l_d U_i + sum_j xi_j Z_ij + e_i
//   Y_i  = c + beta D_i + l_y U_i + sum_j alpha_j Z_ij + e_i
//   W_ik = c + U_i + xi^w_k D_i + e_ik
//
// The first s_z TCPs are invalid (alpha = alpha_invalid, xi = xi_z_invalid),
// the first s_w OCPs are invalid (xi^w = xi_w_invalid).

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "proxsel/dataset.hpp"
#include "proxsel/error.hpp"
#include "proxsel/estimators.hpp"
#include "proxsel/parallel.hpp"
#include "proxsel/rng.hpp"
#include "proxsel/subsample.hpp"

namespace proxsel {

struct SimConfig {
  Index n = 2500;
  Index p_z = 10;
  Index p_w = 1;
  Index s_z = 3;
  Index s_w = 0;
  double beta_true = 0.5;
  double alpha_invalid = 0.8;
  double xi_z_invalid = 0.6;
  double xi_z_valid = 0.2;
  double xi_w_invalid = 0.8;
  double u_variance = 0.25;
  double z_noise_variance = 0.25;
  double w_noise_variance = 0.25;
  double d_noise_variance = 1.0;
  double y_noise_variance = 1.0;
  double intercept = 0.25;
  double confounder_to_treatment = 0.2;
  double confounder_to_outcome = 0.2;
  /// emit a column of ones as a covariate
  bool intercept_column = true;
  int reps = 200;
  std::uint64_t seed = 20240917;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;

  void validate() const {
    auto bad = [](const std::string& m) { fail(ErrorKind::ConfigError, m); };
    std::ostringstream msg;
    if (p_z < 1) bad("p_z: must be >= 1");
    if (p_w < 1) bad("p_w: must be >= 1");
    if (s_z < 0 || s_z > p_z) {
      msg << "s_z: must satisfy 0 <= s_z <= p_z (s_z = " << s_z << ", p_z = " << p_z << ")";
      bad(msg.str());
    }
    if (s_w < 0 || s_w > p_w) {
      msg << "s_w: must satisfy 0 <= s_w <= p_w (s_w = " << s_w << ", p_w = " << p_w << ")";
      bad(msg.str());
    }
    const Index px = intercept_column ? 1 : 0;
    if (!(n > p_z + p_w + px + 1)) {
      msg << "n: must exceed p_z + p_w + p_x + 1 (n = " << n << ")";
      bad(msg.str());
    }
    if (!(u_variance > 0.0)) bad("u_variance: must be > 0");
    if (!(z_noise_variance > 0.0)) bad("z_noise_variance: must be > 0");
    if (!(d_noise_variance > 0.0)) bad("d_noise_variance: must be > 0");
    // zero outcome/OCP noise gives the noiseless variants
    if (!(w_noise_variance >= 0.0)) bad("w_noise_variance: must be >= 0");
    if (!(y_noise_variance >= 0.0)) bad("y_noise_variance: must be >= 0");
    if (reps < 1) bad("reps: must be >= 1");
    for (double v : {beta_true, alpha_invalid, xi_z_invalid, xi_z_valid, xi_w_invalid, intercept,
                     confounder_to_treatment, confounder_to_outcome})
      if (!std::isfinite(v)) bad("coefficients must be finite");
  }

  IndexSet true_invalid_tcps() const {
    IndexSet s;
    for (Index j = 0; j < s_z; ++j) s.push_back(j);
    return s;
  }

  /// first OCP that is valid, or the last one if all are invalid
  Index first_valid_ocp() const { return s_w < p_w ? s_w : p_w - 1; }
};

struct SimulatedDraw {
  Dataset data;
  Vector confounder;
};

namespace detail {

// substream ids; one per generated variable so that OCP column k is the same
// draw whatever p_w is
inline constexpr std::uint64_t kStreamU = 1;
inline constexpr std::uint64_t kStreamD = 2;
inline constexpr std::uint64_t kStreamY = 3;
inline constexpr std::uint64_t kStreamZ = 100;
inline constexpr std::uint64_t kStreamW = 100000;

inline Vector normal_draws(const SimConfig& cfg, std::uint64_t rep, std::uint64_t sub, double variance) {
  Vector v(cfg.n);
  if (variance == 0.0) {
    v.setZero();
    return v;
  }
  CounterRng rng(cfg.seed, rep, sub);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double sd = std::sqrt(variance);
  for (Index i = 0; i < cfg.n; ++i) v(i) = sd * nd(rng);
  return v;
}

}  // namespace detail

inline SimulatedDraw simulate_draw(const SimConfig& cfg, Index rep) {
  cfg.validate();
  if (rep < 0) fail(ErrorKind::InvalidArgument, "replication index must be >= 0");
  const auto r = static_cast<std::uint64_t>(rep);
  const Index n = cfg.n;
  const double c = cfg.intercept;

  SimulatedDraw out;
  Vector u = detail::normal_draws(cfg, r, detail::kStreamU, cfg.u_variance);
  Matrix z(n, cfg.p_z);
  for (Index j = 0; j < cfg.p_z; ++j)
    z.col(j) = (c + u.array()).matrix() +
               detail::normal_draws(cfg, r, detail::kStreamZ + static_cast<std::uint64_t>(j), cfg.z_noise_variance);

  Vector xi(cfg.p_z), alpha(cfg.p_z);
  for (Index j = 0; j < cfg.p_z; ++j) {
    xi(j) = j < cfg.s_z ? cfg.xi_z_invalid : cfg.xi_z_valid;
    alpha(j) = j < cfg.s_z ? cfg.alpha_invalid : 0.0;
  }
  Vector d = (c + cfg.confounder_to_treatment * u.array()).matrix() + z * xi +
             detail::normal_draws(cfg, r, detail::kStreamD, cfg.d_noise_variance);
  Vector y = (c + cfg.beta_true * d.array() + cfg.confounder_to_outcome * u.array()).matrix() + z * alpha +
             detail::normal_draws(cfg, r, detail::kStreamY, cfg.y_noise_variance);
  Matrix w(n, cfg.p_w);
  for (Index k = 0; k < cfg.p_w; ++k) {
    const double xw = k < cfg.s_w ? cfg.xi_w_invalid : 0.0;
    w.col(k) = (c + u.array() + xw * d.array()).matrix() +
               detail::normal_draws(cfg, r, detail::kStreamW + static_cast<std::uint64_t>(k), cfg.w_noise_variance);
  }

  Dataset& ds = out.data;
  ds.outcome = std::move(y);
  ds.treatment = std::move(d);
  ds.tcp = std::move(z);
  ds.ocp = std::move(w);
  ds.covariates = Matrix::Zero(n, 0);
  ds.tcp_names = numbered_names("Z", cfg.p_z);
  ds.ocp_names = numbered_names("W", cfg.p_w);
  if (cfg.intercept_column) add_intercept(ds);
  out.confounder = std::move(u);
  return out;
}

/// Single valid OCP design.
inline Dataset generate_invalid_tcp_data(const SimConfig& cfg, Index rep) {
  if (cfg.p_w != 1 || cfg.s_w != 0)
    fail(ErrorKind::InvalidArgument, "generate_invalid_tcp_data needs p_w = 1 and s_w = 0");
  return simulate_draw(cfg, rep).data;
}

/// p_w OCP columns, the first s_w of which load on the treatment.
inline Dataset generate_invalid_tcp_ocp_data(const SimConfig& cfg, Index rep) {
  return simulate_draw(cfg, rep).data;
}

// ---------------------------------------------------------------------------
// Monte Carlo

enum class Method { adaptive, oracle, naive, ols, median };

inline constexpr const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::adaptive: return "adaptive_proximal";
    case Method::oracle: return "oracle";
    case Method::naive: return "naive_p2sls";
    case Method::ols: return "ols";
    case Method::median: return "median_ocp";
  }
  return "?";
}

inline std::optional<Method> parse_method(const std::string& s) {
  for (Method m : {Method::adaptive, Method::oracle, Method::naive, Method::ols, Method::median})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

struct MonteCarloOptions {
  std::vector<Method> methods{Method::adaptive, Method::oracle, Method::naive, Method::ols};
  EstimatorConfig estimator{};
  /// subsampling CI for the median method; 0 disables it
  int subsample_replicates = 0;
  Index subsample_size = 0;
  bool subsample_recentered = false;
  /// abort if a method fails in more than this share of replications
  double max_failure_rate = 0.1;
  unsigned threads = 1;
};

struct MethodMetrics {
  std::string method;
  int successes = 0;
  int failures = 0;
  std::optional<double> coverage;
  std::optional<double> ci_length;
  double bias = 0.0;
  /// standard deviation of the estimates across replications (n - 1)
  double se = 0.0;
  bool se_defined = false;
  double rmse = 0.0;
  /// share of replications whose selected set equals the true invalid set
  std::optional<double> selection_rate;
  friend bool operator==(const MethodMetrics&, const MethodMetrics&) = default;
};

struct MonteCarloReport {
  std::string label;
  SimConfig config;
  int reps = 0;
  int failed_runs = 0;
  std::vector<MethodMetrics> rows;
  friend bool operator==(const MonteCarloReport&, const MonteCarloReport&) = default;

  const MethodMetrics* find(Method m) const {
    for (const auto& r : rows)
      if (r.method == to_string(m)) return &r;
    return nullptr;
  }
};

namespace detail {

struct RepOutcome {
  bool ok = false;
  double beta = 0.0;
  std::optional<double> lo, hi;
  std::optional<bool> selected_correct;
};

inline constexpr std::uint64_t kSubsampleStreamBase = std::uint64_t{1} << 40;

inline RepOutcome run_method(Method m, const Dataset& data, const SimConfig& cfg, const MonteCarloOptions& opt,
                             Index rep) {
  EstimatorConfig ec = opt.estimator;
  ec.threads = 1;
  const Index valid_ocp = cfg.first_valid_ocp();
  RepOutcome out;
  ProxyEstimate est;
  switch (m) {
    case Method::adaptive:
      est = estimate_invalid_tcp(data, valid_ocp, ec);
      out.selected_correct = est.selected_invalid_tcps == cfg.true_invalid_tcps();
      break;
    case Method::oracle:
      est = oracle_p2sls(data, cfg.true_invalid_tcps(), ec.alpha_level, valid_ocp, ec.rank_tol);
      break;
    case Method::naive:
      est = naive_p2sls(data, 0, ec.alpha_level, ec.rank_tol);
      break;
    case Method::ols:
      est = ols_baseline(data, ec.alpha_level, ec.rank_tol);
      break;
    case Method::median: {
      est = estimate_invalid_tcp_ocp(data, ec);
      if (opt.subsample_replicates > 0) {
        SubsampleOptions so;
        so.replicates = opt.subsample_replicates;
        so.size = opt.subsample_size;
        so.alpha_level = ec.alpha_level;
        so.seed = cfg.seed;
        so.stream = kSubsampleStreamBase + static_cast<std::uint64_t>(rep);
        so.recentered = opt.subsample_recentered;
        const SubsampleResult ci = subsample_ci(data, ec, so);
        est.ci_lower = ci.lower;
        est.ci_upper = ci.upper;
      }
      break;
    }
  }
  out.ok = true;
  out.beta = est.beta_hat;
  out.lo = est.ci_lower;
  out.hi = est.ci_upper;
  return out;
}

inline MethodMetrics summarize(Method m, const std::vector<RepOutcome>& runs, double beta) {
  MethodMetrics mm;
  mm.method = to_string(m);
  double sum = 0.0, sq = 0.0, cover = 0.0, len = 0.0, sel = 0.0;
  int with_ci = 0, with_sel = 0;
  for (const auto& r : runs) {
    if (!r.ok) {
      ++mm.failures;
      continue;
    }
    ++mm.successes;
    const double e = r.beta - beta;
    sum += e;
    sq += e * e;
    if (r.lo && r.hi) {
      ++with_ci;
      cover += (*r.lo <= beta && beta <= *r.hi) ? 1.0 : 0.0;
      len += *r.hi - *r.lo;
    }
    if (r.selected_correct) {
      ++with_sel;
      sel += *r.selected_correct ? 1.0 : 0.0;
    }
  }
  const int k = mm.successes;
  if (k == 0) return mm;
  mm.bias = sum / k;
  mm.rmse = std::sqrt(sq / k);
  if (k >= 2) {
    double ss = 0.0;
    for (const auto& r : runs)
      if (r.ok) ss += (r.beta - beta - mm.bias) * (r.beta - beta - mm.bias);
    mm.se = std::sqrt(ss / (k - 1));
    mm.se_defined = true;
  }
  if (with_ci == k) {
    mm.coverage = cover / k;
    mm.ci_length = len / k;
  }
  if (with_sel == k) mm.selection_rate = sel / k;
  return mm;
}

}  // namespace detail

inline MonteCarloReport run_monte_carlo(const SimConfig& cfg, const MonteCarloOptions& opt = {},
                                        std::string label = {}) {
  cfg.validate();
  if (opt.methods.empty()) fail(ErrorKind::InvalidArgument, "no methods requested");
  const auto reps = static_cast<std::size_t>(cfg.reps);
  const std::size_t nm = opt.methods.size();
  std::vector<detail::RepOutcome> grid(reps * nm);

  parallel_for(reps, opt.threads, [&](std::size_t r) {
    const Dataset data = simulate_draw(cfg, static_cast<Index>(r)).data;
    for (std::size_t k = 0; k < nm; ++k) {
      try {
        grid[r * nm + k] = detail::run_method(opt.methods[k], data, cfg, opt, static_cast<Index>(r));
      } catch (const Error&) {
        grid[r * nm + k] = {};
      }
    }
  });

  MonteCarloReport rep;
  rep.label = std::move(label);
  rep.config = cfg;
  rep.reps = cfg.reps;
  std::vector<bool> rep_failed(reps, false);
  for (std::size_t k = 0; k < nm; ++k) {
    std::vector<detail::RepOutcome> col(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      col[r] = grid[r * nm + k];
      if (!col[r].ok) rep_failed[r] = true;
    }
    MethodMetrics mm = detail::summarize(opt.methods[k], col, cfg.beta_true);
    if (static_cast<double>(mm.failures) > opt.max_failure_rate * static_cast<double>(cfg.reps)) {
      std::ostringstream msg;
      msg << mm.method << " failed in " << mm.failures << " of " << cfg.reps << " replications";
      fail(ErrorKind::AggregateFailure, msg.str());
    }
    rep.rows.push_back(std::move(mm));
  }
  for (bool f : rep_failed) rep.failed_runs += f ? 1 : 0;
  return rep;
}

// ---------------------------------------------------------------------------
// paper tables

enum class TableId { t3, t4, t5, t6 };
enum class Scale { desk, full };

inline std::optional<TableId> parse_table(const std::string& s) {
  if (s == "t3") return TableId::t3;
  if (s == "t4") return TableId::t4;
  if (s == "t5") return TableId::t5;
  if (s == "t6") return TableId::t6;
  return std::nullopt;
}

inline std::optional<Scale> parse_scale(const std::string& s) {
  if (s == "desk") return Scale::desk;
  if (s == "full") return Scale::full;
  return std::nullopt;
}

struct TableJob {
  std::string label;
  SimConfig config;
  MonteCarloOptions options;
};

/// The grid of configurations behind each table.
inline std::vector<TableJob> table_jobs(TableId table, Scale scale, std::optional<int> reps_override = {},
                                        std::uint64_t seed = SimConfig{}.seed) {
  const int reps = reps_override ? *reps_override : (scale == Scale::desk ? 200 : 500);
  const int subsamples = scale == Scale::desk ? 200 : 1000;
  std::vector<TableJob> jobs;
  auto base = [&] {
    SimConfig c;
    c.reps = reps;
    c.seed = seed;
    return c;
  };
  switch (table) {
    case TableId::t3:
      for (Index n : {1500, 2500, 5000}) {
        TableJob j{"n=" + std::to_string(n), base(), {}};
        j.config.n = n;
        jobs.push_back(j);
      }
      break;
    case TableId::t4:
      for (Index s = 1; s <= 8; ++s) {
        TableJob j{"s_z=" + std::to_string(s), base(), {}};
        j.config.s_z = s;
        jobs.push_back(j);
      }
      break;
    case TableId::t5:
      for (Index n : {1500, 2500, 5000}) {
        TableJob j{"n=" + std::to_string(n), base(), {}};
        j.config.n = n;
        j.config.p_w = 10;
        j.config.s_w = 3;
        j.options.methods = {Method::median, Method::oracle, Method::naive, Method::ols};
        j.options.subsample_replicates = subsamples;
        jobs.push_back(j);
      }
      break;
    case TableId::t6:
      for (Index sz = 3; sz <= 6; ++sz)
        for (Index sw = 3; sw <= 6; ++sw) {
          TableJob j{"s_z=" + std::to_string(sz) + ",s_w=" + std::to_string(sw), base(), {}};
          j.config.s_z = sz;
          j.config.p_w = 10;
          j.config.s_w = sw;
          j.options.methods = {Method::median};
          jobs.push_back(j);
        }
      break;
  }
  return jobs;
}

inline std::vector<MonteCarloReport> reproduce_table(TableId table, Scale scale, unsigned threads = 1,
                                                     std::optional<int> reps_override = {},
                                                     std::uint64_t seed = SimConfig{}.seed) {
  std::vector<MonteCarloReport> out;
  for (auto& job : table_jobs(table, scale, reps_override, seed)) {
    job.options.threads = threads;
    out.push_back(run_monte_carlo(job.config, job.options, job.label));
  }
  return out;
}

}  // namespace proxsel
