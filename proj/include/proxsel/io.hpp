#pragma once

// CSV ingestion, JSON run configuration, and run reports (JSON or a pipe
// table). Field names written here are the documented file format.

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "proxsel/dataset.hpp"
#include "proxsel/error.hpp"
#include "proxsel/estimators.hpp"
#include "proxsel/identification.hpp"
#include "proxsel/simulation.hpp"
#include "proxsel/subsample.hpp"

namespace proxsel {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// CSV

struct SchemaMap {
  std::string outcome;
  std::string treatment;
  std::vector<std::string> tcp;
  std::vector<std::string> ocp;
  std::vector<std::string> covariates;
  friend bool operator==(const SchemaMap&, const SchemaMap&) = default;
};

struct CsvOptions {
  char delimiter = ',';
  /// strict: an unparsable cell is an error. lenient: the row is dropped.
  bool strict = true;
  std::vector<std::string> na_tokens{"", "NA", "NaN", "nan", "."};
  bool add_intercept = true;
};

struct CsvLoad {
  Dataset data;
  Index rows_read = 0;
  Index dropped_missing = 0;
  Index dropped_unparsable = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// One record; handles quoted fields with doubled quotes. Embedded newlines
// inside quotes are not supported.
inline std::vector<std::string> split_record(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delim) {
      out.push_back(std::string(trim(cur)));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::string(trim(cur)));
  return out;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

inline CsvLoad load_csv(const std::string& path, const SchemaMap& schema, const CsvOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::ParseError, "'" + path + "' has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_record(line, opt.delimiter);
  std::map<std::string, std::size_t> where;
  for (std::size_t c = 0; c < header.size(); ++c) where.emplace(header[c], c);

  // roles, in Dataset order: Y, D, Z..., W..., X...
  std::vector<std::string> names{schema.outcome, schema.treatment};
  names.insert(names.end(), schema.tcp.begin(), schema.tcp.end());
  names.insert(names.end(), schema.ocp.begin(), schema.ocp.end());
  names.insert(names.end(), schema.covariates.begin(), schema.covariates.end());
  {
    std::set<std::string> seen;
    for (const auto& nm : names)
      if (!seen.insert(nm).second) fail(ErrorKind::InvalidArgument, "column '" + nm + "' is assigned to two roles");
    std::string missing;
    for (const auto& nm : names)
      if (!where.count(nm)) missing += (missing.empty() ? "" : ", ") + nm;
    if (!missing.empty()) fail(ErrorKind::MissingColumn, "columns not in header: " + missing);
  }
  if (schema.ocp.empty()) fail(ErrorKind::InvalidArgument, "schema needs at least one OCP column");

  std::vector<std::size_t> cols;
  for (const auto& nm : names) cols.push_back(where[nm]);
  const std::set<std::string> na(opt.na_tokens.begin(), opt.na_tokens.end());

  CsvLoad out;
  std::vector<std::vector<double>> rows;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    ++out.rows_read;
    const auto rec = detail::split_record(line, opt.delimiter);
    if (rec.size() != header.size()) {
      if (!opt.strict) {
        ++out.dropped_unparsable;
        continue;
      }
      std::ostringstream msg;
      msg << "line " << line_no << ": expected " << header.size() << " fields, found " << rec.size();
      fail(ErrorKind::ParseError, msg.str());
    }
    std::vector<double> vals;
    bool missing = false, unparsable = false;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const std::string& cell = rec[cols[k]];
      if (na.count(cell)) {
        missing = true;
        continue;
      }
      const auto v = detail::parse_number(cell);
      if (!v) {
        if (opt.strict) {
          std::ostringstream msg;
          msg << "line " << line_no << ", column '" << names[k] << "': cannot parse '" << cell << "'";
          fail(ErrorKind::ParseError, msg.str());
        }
        unparsable = true;
        continue;
      }
      vals.push_back(*v);
    }
    if (unparsable) {
      ++out.dropped_unparsable;
    } else if (missing) {
      ++out.dropped_missing;
    } else {
      rows.push_back(std::move(vals));
    }
  }
  if (rows.empty()) fail(ErrorKind::EmptyAfterFiltering, "no complete rows left in '" + path + "'");

  const auto n = static_cast<Index>(rows.size());
  const auto pz = static_cast<Index>(schema.tcp.size());
  const auto pw = static_cast<Index>(schema.ocp.size());
  const auto px = static_cast<Index>(schema.covariates.size());
  Dataset& ds = out.data;
  ds.outcome.resize(n);
  ds.treatment.resize(n);
  ds.tcp.resize(n, pz);
  ds.ocp.resize(n, pw);
  ds.covariates.resize(n, px);
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    ds.outcome(i) = r[0];
    ds.treatment(i) = r[1];
    for (Index j = 0; j < pz; ++j) ds.tcp(i, j) = r[static_cast<std::size_t>(2 + j)];
    for (Index j = 0; j < pw; ++j) ds.ocp(i, j) = r[static_cast<std::size_t>(2 + pz + j)];
    for (Index j = 0; j < px; ++j) ds.covariates(i, j) = r[static_cast<std::size_t>(2 + pz + pw + j)];
  }
  ds.tcp_names = schema.tcp;
  ds.ocp_names = schema.ocp;
  ds.covariate_names = schema.covariates;
  if (opt.add_intercept) add_intercept(ds);
  return out;
}

/// Writes Y, D, Z..., W..., X... with full round-trip precision. An
/// intercept covariate is left out; load_csv adds it back by default.
inline void write_csv(const Dataset& data, const std::string& path, const std::string& outcome = "Y",
                      const std::string& treatment = "D") {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write '" + path + "'");
  std::vector<Index> xcols;
  for (Index j = 0; j < data.p_x(); ++j)
    if (data.covariate_names[static_cast<std::size_t>(j)] != kInterceptName) xcols.push_back(j);
  out << outcome << ',' << treatment;
  for (const auto& nm : data.tcp_names) out << ',' << nm;
  for (const auto& nm : data.ocp_names) out << ',' << nm;
  for (Index j : xcols) out << ',' << data.covariate_names[static_cast<std::size_t>(j)];
  out << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (Index i = 0; i < data.n(); ++i) {
    put(data.outcome(i));
    out << ',';
    put(data.treatment(i));
    for (Index j = 0; j < data.p_z(); ++j) out << ',', put(data.tcp(i, j));
    for (Index j = 0; j < data.p_w(); ++j) out << ',', put(data.ocp(i, j));
    for (Index j : xcols) out << ',', put(data.covariates(i, j));
    out << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// JSON conversion. NaN is written as null and read back as NaN.

namespace detail {

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double num_from(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

template <class T>
json opt_num(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

inline json index_set(const IndexSet& s) {
  json a = json::array();
  for (Index v : s) a.push_back(v);
  return a;
}

inline IndexSet index_set_from(const json& j) {
  IndexSet s;
  for (const auto& v : j) s.push_back(v.get<Index>());
  return s;
}

}  // namespace detail

inline json to_json(const OcpRun& r) {
  json j;
  j["ocp_index"] = r.ocp_index;
  j["ocp_name"] = r.ocp_name;
  j["ok"] = r.ok;
  j["error"] = r.error;
  j["beta_hat"] = detail::num(r.beta_hat);
  j["selected_invalid_tcps"] = detail::index_set(r.selected_invalid_tcps);
  j["invalid_tcps"] = r.invalid_tcps;
  j["valid_tcps"] = r.valid_tcps;
  j["ci_lower"] = detail::opt_num(r.ci_lower);
  j["ci_upper"] = detail::opt_num(r.ci_upper);
  return j;
}

inline OcpRun ocp_run_from_json(const json& j) {
  OcpRun r;
  r.ocp_index = j.at("ocp_index").get<Index>();
  r.ocp_name = j.at("ocp_name").get<std::string>();
  r.ok = j.at("ok").get<bool>();
  r.error = j.at("error").get<std::string>();
  r.beta_hat = detail::num_from(j.at("beta_hat"));
  r.selected_invalid_tcps = detail::index_set_from(j.at("selected_invalid_tcps"));
  r.invalid_tcps = j.at("invalid_tcps").get<std::vector<std::string>>();
  r.valid_tcps = j.at("valid_tcps").get<std::vector<std::string>>();
  r.ci_lower = detail::opt_from<double>(j, "ci_lower");
  r.ci_upper = detail::opt_from<double>(j, "ci_upper");
  return r;
}

inline json to_json(const ProxyEstimate& e) {
  json j;
  j["method"] = e.method;
  j["n"] = e.n;
  j["beta_hat"] = detail::num(e.beta_hat);
  j["gamma_hat"] = detail::num(e.gamma_hat);
  json a = json::array();
  for (double v : e.alpha_hat) a.push_back(detail::num(v));
  j["alpha_hat"] = a;
  j["selected_invalid_tcps"] = detail::index_set(e.selected_invalid_tcps);
  j["variance"] = detail::opt_num(e.variance);
  j["ci_lower"] = detail::opt_num(e.ci_lower);
  j["ci_upper"] = detail::opt_num(e.ci_upper);
  j["lambda"] = detail::opt_num(e.lambda);
  j["ocp_index"] = detail::opt_num(e.ocp_index);
  json p = json::array();
  for (double v : e.per_ocp_estimates) p.push_back(detail::num(v));
  j["per_ocp_estimates"] = p;
  json rows = json::array();
  for (const auto& r : e.per_ocp) rows.push_back(to_json(r));
  j["per_ocp"] = rows;
  j["warnings"] = e.warnings;
  return j;
}

inline ProxyEstimate proxy_estimate_from_json(const json& j) {
  ProxyEstimate e;
  e.method = j.at("method").get<std::string>();
  e.n = j.at("n").get<Index>();
  e.beta_hat = detail::num_from(j.at("beta_hat"));
  e.gamma_hat = detail::num_from(j.at("gamma_hat"));
  for (const auto& v : j.at("alpha_hat")) e.alpha_hat.push_back(detail::num_from(v));
  e.selected_invalid_tcps = detail::index_set_from(j.at("selected_invalid_tcps"));
  e.variance = detail::opt_from<double>(j, "variance");
  e.ci_lower = detail::opt_from<double>(j, "ci_lower");
  e.ci_upper = detail::opt_from<double>(j, "ci_upper");
  e.lambda = detail::opt_from<double>(j, "lambda");
  e.ocp_index = detail::opt_from<Index>(j, "ocp_index");
  for (const auto& v : j.at("per_ocp_estimates")) e.per_ocp_estimates.push_back(detail::num_from(v));
  for (const auto& r : j.at("per_ocp")) e.per_ocp.push_back(ocp_run_from_json(r));
  e.warnings = j.at("warnings").get<std::vector<std::string>>();
  return e;
}

inline json to_json(const SimConfig& c) {
  json j;
  j["n"] = c.n;
  j["p_z"] = c.p_z;
  j["p_w"] = c.p_w;
  j["s_z"] = c.s_z;
  j["s_w"] = c.s_w;
  j["beta_true"] = c.beta_true;
  j["alpha_invalid"] = c.alpha_invalid;
  j["xi_z_invalid"] = c.xi_z_invalid;
  j["xi_z_valid"] = c.xi_z_valid;
  j["xi_w_invalid"] = c.xi_w_invalid;
  j["u_variance"] = c.u_variance;
  j["z_noise_variance"] = c.z_noise_variance;
  j["w_noise_variance"] = c.w_noise_variance;
  j["d_noise_variance"] = c.d_noise_variance;
  j["y_noise_variance"] = c.y_noise_variance;
  j["intercept"] = c.intercept;
  j["confounder_to_treatment"] = c.confounder_to_treatment;
  j["confounder_to_outcome"] = c.confounder_to_outcome;
  j["intercept_column"] = c.intercept_column;
  j["reps"] = c.reps;
  j["seed"] = c.seed;
  return j;
}

inline json to_json(const LambdaRule& r) { return json{{"mode", to_string(r.mode)}, {"value", r.value}}; }

inline json to_json(const EstimatorConfig& c) {
  json j;
  j["adaptive_lambda"] = to_json(c.adaptive_lambda);
  j["lasso_lambda"] = to_json(c.lasso_lambda);
  j["alpha_level"] = c.alpha_level;
  j["rank_tol"] = c.rank_tol;
  j["delta_floor"] = c.delta_floor;
  j["weak_tol"] = c.weak_tol;
  j["adaptive_floor"] = c.adaptive_floor;
  j["cv_folds"] = c.cv_folds;
  j["cv_grid"] = c.cv_grid;
  j["cv_min_ratio"] = c.cv_min_ratio;
  j["cv_one_se"] = c.cv_one_se;
  j["lasso"] = json{{"kkt_tol", c.lasso.kkt_tol},
                    {"gap_tol", c.lasso.gap_tol},
                    {"max_sweeps", c.lasso.max_sweeps},
                    {"polish", c.lasso.polish}};
  return j;
}

inline json to_json(const MethodMetrics& m) {
  json j;
  j["method"] = m.method;
  j["successes"] = m.successes;
  j["failures"] = m.failures;
  j["coverage"] = detail::opt_num(m.coverage);
  j["ci_length"] = detail::opt_num(m.ci_length);
  j["bias"] = detail::num(m.bias);
  j["se"] = detail::num(m.se);
  j["se_defined"] = m.se_defined;
  j["rmse"] = detail::num(m.rmse);
  j["selection_rate"] = detail::opt_num(m.selection_rate);
  return j;
}

inline MethodMetrics method_metrics_from_json(const json& j) {
  MethodMetrics m;
  m.method = j.at("method").get<std::string>();
  m.successes = j.at("successes").get<int>();
  m.failures = j.at("failures").get<int>();
  m.coverage = detail::opt_from<double>(j, "coverage");
  m.ci_length = detail::opt_from<double>(j, "ci_length");
  m.bias = detail::num_from(j.at("bias"));
  m.se = detail::num_from(j.at("se"));
  m.se_defined = j.at("se_defined").get<bool>();
  m.rmse = detail::num_from(j.at("rmse"));
  m.selection_rate = detail::opt_from<double>(j, "selection_rate");
  return m;
}

SimConfig sim_config_from_json(const json& j, const std::string& path = "simulation");

inline json to_json(const MonteCarloReport& r) {
  json j;
  j["label"] = r.label;
  j["config"] = to_json(r.config);
  j["reps"] = r.reps;
  j["failed_runs"] = r.failed_runs;
  json rows = json::array();
  for (const auto& m : r.rows) rows.push_back(to_json(m));
  j["methods"] = rows;
  return j;
}

inline MonteCarloReport monte_carlo_from_json(const json& j) {
  MonteCarloReport r;
  r.label = j.at("label").get<std::string>();
  r.config = sim_config_from_json(j.at("config"), "config");
  r.reps = j.at("reps").get<int>();
  r.failed_runs = j.at("failed_runs").get<int>();
  for (const auto& m : j.at("methods")) r.rows.push_back(method_metrics_from_json(m));
  return r;
}

inline json to_json(const IdentificationReport& r) {
  json j;
  j["identified"] = r.identified;
  j["method"] = to_string(r.method);
  j["subset_size"] = r.subset_size;
  json subs = json::array();
  for (const auto& s : r.subsets) subs.push_back(json{{"members", detail::index_set(s.members)}, {"q", s.q}});
  j["subsets"] = subs;
  j["distinct_q_count"] = r.distinct_q_count;
  j["distinct_q"] = r.distinct_q;
  j["enumeration_complete"] = r.enumeration_complete;
  return j;
}

inline IdentificationReport identification_from_json(const json& j) {
  IdentificationReport r;
  r.identified = j.at("identified").get<bool>();
  r.method = j.at("method").get<std::string>() == "theorem1" ? IdentificationMethod::theorem1
                                                              : IdentificationMethod::majority_rule;
  r.subset_size = j.at("subset_size").get<Index>();
  for (const auto& s : j.at("subsets"))
    r.subsets.push_back({detail::index_set_from(s.at("members")), s.at("q").get<double>()});
  r.distinct_q_count = j.at("distinct_q_count").get<Index>();
  r.distinct_q = j.at("distinct_q").get<std::vector<double>>();
  r.enumeration_complete = j.at("enumeration_complete").get<bool>();
  return r;
}

inline json to_json(const RipConstants& r) {
  return json{{"order", r.order}, {"lower", r.lower}, {"upper", r.upper}};
}

inline RipConstants rip_from_json(const json& j) {
  return {j.at("order").get<Index>(), j.at("lower").get<double>(), j.at("upper").get<double>()};
}

inline json to_json(const DiagnosticReport& d) {
  json j;
  if (d.irrepresentable)
    j["irrepresentable"] = json{{"value", d.irrepresentable->value}, {"holds", d.irrepresentable->holds}};
  else
    j["irrepresentable"] = nullptr;
  if (d.theorem3)
    j["theorem3"] = json{{"z", to_json(d.theorem3->z)},
                         {"z_on_what", to_json(d.theorem3->z_on_what)},
                         {"z_on_dtilde", to_json(d.theorem3->z_on_dtilde)},
                         {"margin", d.theorem3->margin},
                         {"holds", d.theorem3->holds}};
  else
    j["theorem3"] = nullptr;
  j["rip"] = d.rip ? to_json(*d.rip) : json(nullptr);
  return j;
}

inline DiagnosticReport diagnostic_from_json(const json& j) {
  DiagnosticReport d;
  if (!j.at("irrepresentable").is_null())
    d.irrepresentable = IrrepresentableResult{j["irrepresentable"].at("value").get<double>(),
                                              j["irrepresentable"].at("holds").get<bool>()};
  if (!j.at("theorem3").is_null()) {
    const auto& t = j["theorem3"];
    d.theorem3 = Theorem3Report{rip_from_json(t.at("z")), rip_from_json(t.at("z_on_what")),
                                rip_from_json(t.at("z_on_dtilde")), t.at("margin").get<double>(),
                                t.at("holds").get<bool>()};
  }
  if (!j.at("rip").is_null()) d.rip = rip_from_json(j["rip"]);
  return d;
}

inline json to_json(const SubsampleResult& s) {
  return json{{"lower", s.lower}, {"upper", s.upper}, {"size", s.size}, {"replicates", s.replicates},
              {"failures", s.failures}};
}

inline SubsampleResult subsample_from_json(const json& j) {
  return {j.at("lower").get<double>(), j.at("upper").get<double>(), j.at("size").get<Index>(),
          j.at("replicates").get<int>(), j.at("failures").get<int>()};
}

// ---------------------------------------------------------------------------
// run configuration

/// Settings for the median method inside Monte Carlo runs.
struct MonteCarloSettings {
  std::vector<Method> methods{Method::adaptive, Method::oracle, Method::naive, Method::ols};
  int subsample_replicates = 0;
  Index subsample_size = 0;
  bool subsample_recentered = false;
  double max_failure_rate = 0.1;
  friend bool operator==(const MonteCarloSettings&, const MonteCarloSettings&) = default;
};

/// Subsampling settings for `estimate`.
struct SubsampleSettings {
  int replicates = 1000;
  Index size = 0;
  bool recentered = false;
  double max_failure_rate = 0.2;
  friend bool operator==(const SubsampleSettings&, const SubsampleSettings&) = default;
};

struct RunConfig {
  SimConfig simulation{};
  EstimatorConfig estimator{};
  MonteCarloSettings monte_carlo{};
  SubsampleSettings subsample{};
};

inline bool operator==(const EstimatorConfig& a, const EstimatorConfig& b) {
  return to_json(a) == to_json(b);
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.simulation == b.simulation && a.estimator == b.estimator && a.monte_carlo == b.monte_carlo &&
         a.subsample == b.subsample;
}

inline json to_json(const MonteCarloSettings& m) {
  json methods = json::array();
  for (Method x : m.methods) methods.push_back(to_string(x));
  return json{{"methods", methods},
              {"subsample_replicates", m.subsample_replicates},
              {"subsample_size", m.subsample_size},
              {"subsample_recentered", m.subsample_recentered},
              {"max_failure_rate", m.max_failure_rate}};
}

inline json to_json(const SubsampleSettings& s) {
  return json{{"replicates", s.replicates},
              {"size", s.size},
              {"recentered", s.recentered},
              {"max_failure_rate", s.max_failure_rate}};
}

inline json to_json(const RunConfig& c) {
  return json{{"simulation", to_json(c.simulation)},
              {"estimator", to_json(c.estimator)},
              {"monte_carlo", to_json(c.monte_carlo)},
              {"subsample", to_json(c.subsample)}};
}

namespace detail {

// Reads typed keys from one JSON object, remembering which keys were used so
// leftovers can be reported with their full path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::ConfigError, path_ + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    const std::string where = path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(ErrorKind::ConfigError, where + ": expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(ErrorKind::ConfigError, where + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned())
          out = v.get<T>();
        else if (v.get<long long>() < 0)
          fail(ErrorKind::ConfigError, where + ": expected a non-negative integer");
        else
          out = static_cast<T>(v.get<long long>());
      } else {
        out = v.get<T>();
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(ErrorKind::ConfigError, where + ": expected a number");
      out = v.get<T>();
    } else {
      out = v.get<T>();
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }
  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(ErrorKind::ConfigError, path_ + "." + it.key() + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline LambdaRule lambda_rule_from(const json& j, const std::string& path, LambdaRule rule) {
  Section s(j, path);
  std::string mode = to_string(rule.mode);
  s.read("mode", mode);
  s.read("value", rule.value);
  s.finish();
  if (mode == "rate")
    rule.mode = LambdaMode::rate;
  else if (mode == "cv")
    rule.mode = LambdaMode::cv;
  else if (mode == "fixed")
    rule.mode = LambdaMode::fixed;
  else
    fail(ErrorKind::ConfigError, path + ".mode: expected one of rate, cv, fixed");
  if (!(rule.value >= 0.0)) fail(ErrorKind::ConfigError, path + ".value: must be >= 0");
  return rule;
}

}  // namespace detail

inline SimConfig sim_config_from_json(const json& j, const std::string& path) {
  SimConfig c;
  detail::Section s(j, path);
  s.read("n", c.n);
  s.read("p_z", c.p_z);
  s.read("p_w", c.p_w);
  s.read("s_z", c.s_z);
  s.read("s_w", c.s_w);
  s.read("beta_true", c.beta_true);
  s.read("alpha_invalid", c.alpha_invalid);
  s.read("xi_z_invalid", c.xi_z_invalid);
  s.read("xi_z_valid", c.xi_z_valid);
  s.read("xi_w_invalid", c.xi_w_invalid);
  s.read("u_variance", c.u_variance);
  s.read("z_noise_variance", c.z_noise_variance);
  s.read("w_noise_variance", c.w_noise_variance);
  s.read("d_noise_variance", c.d_noise_variance);
  s.read("y_noise_variance", c.y_noise_variance);
  s.read("intercept", c.intercept);
  s.read("confounder_to_treatment", c.confounder_to_treatment);
  s.read("confounder_to_outcome", c.confounder_to_outcome);
  s.read("intercept_column", c.intercept_column);
  s.read("reps", c.reps);
  s.read("seed", c.seed);
  s.finish();
  try {
    c.validate();
  } catch (const Error& e) {
    // validate() names the offending field first; prefix the section path
    std::string msg = e.what();
    const std::string tag = std::string(to_string(ErrorKind::ConfigError)) + ": ";
    if (msg.rfind(tag, 0) == 0) msg.erase(0, tag.size());
    fail(ErrorKind::ConfigError, path + "." + msg);
  }
  return c;
}

inline EstimatorConfig estimator_config_from_json(const json& j, const std::string& path = "estimator") {
  EstimatorConfig c;
  detail::Section s(j, path);
  if (s.has("adaptive_lambda"))
    c.adaptive_lambda = detail::lambda_rule_from(s.at("adaptive_lambda"), s.path("adaptive_lambda"), c.adaptive_lambda);
  if (s.has("lasso_lambda"))
    c.lasso_lambda = detail::lambda_rule_from(s.at("lasso_lambda"), s.path("lasso_lambda"), c.lasso_lambda);
  s.read("alpha_level", c.alpha_level);
  s.read("rank_tol", c.rank_tol);
  s.read("delta_floor", c.delta_floor);
  s.read("weak_tol", c.weak_tol);
  s.read("adaptive_floor", c.adaptive_floor);
  s.read("cv_folds", c.cv_folds);
  s.read("cv_grid", c.cv_grid);
  s.read("cv_min_ratio", c.cv_min_ratio);
  s.read("cv_one_se", c.cv_one_se);
  if (s.has("lasso")) {
    detail::Section l(s.at("lasso"), s.path("lasso"));
    l.read("kkt_tol", c.lasso.kkt_tol);
    l.read("gap_tol", c.lasso.gap_tol);
    l.read("max_sweeps", c.lasso.max_sweeps);
    l.read("polish", c.lasso.polish);
    l.finish();
  }
  s.finish();
  auto bad = [&](const char* key, const char* why) { fail(ErrorKind::ConfigError, path + "." + key + ": " + why); };
  if (!(c.alpha_level > 0.0 && c.alpha_level < 1.0)) bad("alpha_level", "must lie in (0, 1)");
  if (!(c.rank_tol > 0.0)) bad("rank_tol", "must be > 0");
  if (!(c.delta_floor >= 0.0)) bad("delta_floor", "must be >= 0");
  if (!(c.weak_tol >= 0.0)) bad("weak_tol", "must be >= 0");
  if (!(c.adaptive_floor > 0.0)) bad("adaptive_floor", "must be > 0");
  if (c.cv_folds < 2) bad("cv_folds", "must be >= 2");
  if (c.cv_grid < 2) bad("cv_grid", "must be >= 2");
  if (!(c.cv_min_ratio > 0.0 && c.cv_min_ratio < 1.0)) bad("cv_min_ratio", "must lie in (0, 1)");
  if (!(c.lasso.kkt_tol > 0.0)) bad("lasso.kkt_tol", "must be > 0");
  if (!(c.lasso.gap_tol > 0.0)) bad("lasso.gap_tol", "must be > 0");
  if (c.lasso.max_sweeps < 1) bad("lasso.max_sweeps", "must be >= 1");
  return c;
}

inline MonteCarloSettings monte_carlo_settings_from_json(const json& j, const std::string& path = "monte_carlo") {
  MonteCarloSettings m;
  detail::Section s(j, path);
  if (s.has("methods")) {
    const json& arr = s.at("methods");
    if (!arr.is_array() || arr.empty()) fail(ErrorKind::ConfigError, path + ".methods: expected a non-empty list");
    m.methods.clear();
    for (const auto& v : arr) {
      const auto parsed = v.is_string() ? parse_method(v.get<std::string>()) : std::nullopt;
      if (!parsed)
        fail(ErrorKind::ConfigError,
             path + ".methods: expected adaptive_proximal, oracle, naive_p2sls, ols or median_ocp");
      m.methods.push_back(*parsed);
    }
  }
  s.read("subsample_replicates", m.subsample_replicates);
  s.read("subsample_size", m.subsample_size);
  s.read("subsample_recentered", m.subsample_recentered);
  s.read("max_failure_rate", m.max_failure_rate);
  s.finish();
  if (m.subsample_replicates < 0) fail(ErrorKind::ConfigError, path + ".subsample_replicates: must be >= 0");
  if (m.subsample_size < 0) fail(ErrorKind::ConfigError, path + ".subsample_size: must be >= 0");
  if (!(m.max_failure_rate >= 0.0 && m.max_failure_rate <= 1.0))
    fail(ErrorKind::ConfigError, path + ".max_failure_rate: must lie in [0, 1]");
  return m;
}

inline SubsampleSettings subsample_settings_from_json(const json& j, const std::string& path = "subsample") {
  SubsampleSettings m;
  detail::Section s(j, path);
  s.read("replicates", m.replicates);
  s.read("size", m.size);
  s.read("recentered", m.recentered);
  s.read("max_failure_rate", m.max_failure_rate);
  s.finish();
  if (m.replicates < 1) fail(ErrorKind::ConfigError, path + ".replicates: must be >= 1");
  if (m.size < 0) fail(ErrorKind::ConfigError, path + ".size: must be >= 0");
  if (!(m.max_failure_rate >= 0.0 && m.max_failure_rate <= 1.0))
    fail(ErrorKind::ConfigError, path + ".max_failure_rate: must lie in [0, 1]");
  return m;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (j.is_null()) return c;
  detail::Section s(j, "config");
  if (s.has("simulation")) c.simulation = sim_config_from_json(s.at("simulation"), "simulation");
  if (s.has("estimator")) c.estimator = estimator_config_from_json(s.at("estimator"));
  if (s.has("monte_carlo")) c.monte_carlo = monte_carlo_settings_from_json(s.at("monte_carlo"));
  if (s.has("subsample")) c.subsample = subsample_settings_from_json(s.at("subsample"));
  try {
    s.finish();
  } catch (const Error& e) {
    // top-level keys are reported without the synthetic "config." prefix
    std::string msg = e.what();
    const auto at = msg.find("config.");
    if (at != std::string::npos) msg.erase(0, at + 7);
    fail(ErrorKind::ConfigError, msg);
  }
  return c;
}

/// Empty or whitespace-only text means all defaults.
inline RunConfig parse_config_text(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ConfigError, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::ConfigError, "top level must be a JSON object");
  return run_config_from_json(j);
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ConfigError, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// run reports

struct RunReport {
  std::string command;
  json config;  // fully resolved configuration echo
  std::uint64_t seed = 0;
  std::vector<ProxyEstimate> estimates;
  /// one row per OCP configuration, same columns as the summary table
  std::vector<OcpRun> ocp_table;
  std::optional<double> median_beta;
  std::optional<SubsampleResult> subsample;
  std::vector<MonteCarloReport> monte_carlo;
  std::optional<IdentificationReport> identification;
  std::optional<DiagnosticReport> diagnostics;
  /// wall clock; only filled on request so reports stay reproducible
  std::optional<double> elapsed_seconds;
  friend bool operator==(const RunReport&, const RunReport&) = default;
};

inline json to_json(const RunReport& r) {
  json j;
  j["command"] = r.command;
  j["config"] = r.config;
  j["seed"] = r.seed;
  json est = json::array();
  for (const auto& e : r.estimates) est.push_back(to_json(e));
  j["estimates"] = est;
  json tab = json::array();
  for (const auto& row : r.ocp_table) tab.push_back(to_json(row));
  j["ocp_table"] = tab;
  j["median_beta"] = detail::opt_num(r.median_beta);
  j["subsample"] = r.subsample ? to_json(*r.subsample) : json(nullptr);
  json mc = json::array();
  for (const auto& m : r.monte_carlo) mc.push_back(to_json(m));
  j["monte_carlo"] = mc;
  j["identification"] = r.identification ? to_json(*r.identification) : json(nullptr);
  j["diagnostics"] = r.diagnostics ? to_json(*r.diagnostics) : json(nullptr);
  if (r.elapsed_seconds) j["elapsed_seconds"] = *r.elapsed_seconds;
  return j;
}

inline RunReport run_report_from_json(const json& j) {
  RunReport r;
  r.command = j.at("command").get<std::string>();
  r.config = j.at("config");
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("estimates")) r.estimates.push_back(proxy_estimate_from_json(e));
  for (const auto& row : j.at("ocp_table")) r.ocp_table.push_back(ocp_run_from_json(row));
  r.median_beta = detail::opt_from<double>(j, "median_beta");
  if (!j.at("subsample").is_null()) r.subsample = subsample_from_json(j["subsample"]);
  for (const auto& m : j.at("monte_carlo")) r.monte_carlo.push_back(monte_carlo_from_json(m));
  if (!j.at("identification").is_null()) r.identification = identification_from_json(j["identification"]);
  if (!j.at("diagnostics").is_null()) r.diagnostics = diagnostic_from_json(j["diagnostics"]);
  r.elapsed_seconds = detail::opt_from<double>(j, "elapsed_seconds");
  return r;
}

enum class ReportFormat { structured, table };

inline std::optional<ReportFormat> parse_format(const std::string& s) {
  if (s == "json" || s == "structured") return ReportFormat::structured;
  if (s == "table") return ReportFormat::table;
  return std::nullopt;
}

namespace detail {

inline std::string fmt(double v, int prec = 3) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string name_set(const std::vector<std::string>& names) {
  std::string s = "{";
  for (std::size_t k = 0; k < names.size(); ++k) s += (k ? ", " : "") + names[k];
  return s + "}";
}

}  // namespace detail

inline constexpr const char* kFailureMarker = "FAILED";

/// Per-OCP summary: W | Invalid TCPs | Valid TCPs | beta | CI
inline std::string render_ocp_table(const std::vector<OcpRun>& rows, std::optional<double> median) {
  std::ostringstream out;
  out << "| W | Invalid TCPs | Valid TCPs | beta_hat | CI |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    if (!r.ok) {
      out << "| " << r.ocp_name << " | " << kFailureMarker << " | " << r.error << " | NA | NA |\n";
      continue;
    }
    out << "| " << r.ocp_name << " | " << detail::name_set(r.invalid_tcps) << " | " << detail::name_set(r.valid_tcps)
        << " | " << detail::fmt(r.beta_hat) << " | ";
    if (r.ci_lower && r.ci_upper)
      out << "[" << detail::fmt(*r.ci_lower) << ", " << detail::fmt(*r.ci_upper) << "]";
    else
      out << "NA";
    out << " |\n";
  }
  if (median) out << "| median |  |  | " << detail::fmt(*median) << " |  |\n";
  return out.str();
}

inline std::string render_monte_carlo(const MonteCarloReport& m) {
  std::ostringstream out;
  out << "## " << (m.label.empty() ? "monte carlo" : m.label) << " (reps = " << m.reps
      << ", failed = " << m.failed_runs << ")\n";
  out << "| method | Cov | Len | Bias | SE | RMSE |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& r : m.rows) {
    out << "| " << r.method << " | " << (r.coverage ? detail::fmt(*r.coverage, 2) : "NA") << " | "
        << (r.ci_length ? detail::fmt(*r.ci_length) : "NA") << " | " << detail::fmt(r.bias) << " | "
        << (r.se_defined ? detail::fmt(r.se) : "NA") << " | " << detail::fmt(r.rmse) << " |\n";
  }
  return out.str();
}

inline std::string render_table(const RunReport& r) {
  std::ostringstream out;
  if (!r.ocp_table.empty()) out << render_ocp_table(r.ocp_table, r.median_beta);
  if (r.subsample)
    out << "\nsubsample CI: [" << detail::fmt(r.subsample->lower) << ", " << detail::fmt(r.subsample->upper)
        << "] (N = " << r.subsample->replicates << ", b = " << r.subsample->size
        << ", failed = " << r.subsample->failures << ")\n";
  for (const auto& m : r.monte_carlo) out << (out.tellp() > 0 ? "\n" : "") << render_monte_carlo(m);
  if (r.identification) {
    const auto& id = *r.identification;
    out << "identified: " << (id.identified ? "true" : "false") << " (" << to_string(id.method) << ")\n";
    for (const auto& s : id.subsets) {
      out << "  subset {";
      for (std::size_t k = 0; k < s.members.size(); ++k) out << (k ? ", " : "") << s.members[k] + 1;
      out << "} q = " << s.q << "\n";
    }
  }
  if (r.diagnostics) {
    const auto& d = *r.diagnostics;
    if (d.irrepresentable)
      out << "irrepresentable: " << detail::fmt(d.irrepresentable->value, 4)
          << (d.irrepresentable->holds ? " (holds)" : " (violated)") << "\n";
    if (d.theorem3)
      out << "recovery margin: " << detail::fmt(d.theorem3->margin, 4) << (d.theorem3->holds ? " (holds)" : " (violated)")
          << "\n";
    if (d.rip)
      out << "rip order " << d.rip->order << ": lower " << detail::fmt(d.rip->lower, 4) << ", upper "
          << detail::fmt(d.rip->upper, 4) << "\n";
  }
  return out.str();
}

inline std::string format_report(const RunReport& r, ReportFormat f) {
  if (f == ReportFormat::structured) return to_json(r).dump(2) + "\n";
  return render_table(r);
}

inline void write_report(const RunReport& r, const std::string& path, ReportFormat f = ReportFormat::structured) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write report to '" + path + "'");
  out << format_report(r, f);
  out.flush();
  if (!out) fail(ErrorKind::IoError, "write to '" + path + "' failed");
}

inline RunReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open report '" + path + "'");
  try {
    return run_report_from_json(json::parse(in));
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("malformed report: ") + e.what());
  }
}

}  // namespace proxsel
