#pragma once

// proxsel command line: simulate, reproduce, estimate, identify, diagnose.
// run_cli() is kept separate from main() so tests can drive it in-process.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "proxsel/proxsel.hpp"

namespace proxsel::cli {

struct GlobalOptions {
  unsigned threads = 0;  // 0: all cores
  std::optional<std::uint64_t> seed;
  std::string out;  // empty: stdout
  std::string format = "json";
  bool timing = false;
  std::string config;
};

struct SchemaArgs {
  std::string data;
  std::string outcome = "Y";
  std::string treatment = "D";
  std::vector<std::string> tcp;
  std::vector<std::string> ocp;
  std::vector<std::string> covariates;
  std::string delimiter = ",";
  bool lenient = false;
  bool no_intercept = false;

  void attach(CLI::App* app, bool data_required) {
    auto* d = app->add_option("--data", data, "CSV file with a header row");
    if (data_required) d->required();
    app->add_option("--outcome", outcome, "outcome column")->capture_default_str();
    app->add_option("--treatment", treatment, "treatment column")->capture_default_str();
    app->add_option("--tcp", tcp, "candidate TCP columns")->delimiter(',');
    app->add_option("--ocp", ocp, "candidate OCP columns")->delimiter(',');
    app->add_option("--covariates", covariates, "covariate columns")->delimiter(',');
    app->add_option("--delimiter", delimiter, "field separator")->capture_default_str();
    app->add_flag("--lenient", lenient, "drop unparsable rows instead of failing");
    app->add_flag("--no-intercept", no_intercept, "do not add a constant covariate");
  }

  CsvLoad load() const {
    if (delimiter.size() != 1) fail(ErrorKind::InvalidArgument, "--delimiter must be one character");
    SchemaMap schema{outcome, treatment, tcp, ocp, covariates};
    CsvOptions opt;
    opt.delimiter = delimiter[0];
    opt.strict = !lenient;
    opt.add_intercept = !no_intercept;
    return load_csv(data, schema, opt);
  }

  json echo() const {
    return json{{"data", data},           {"outcome", outcome},     {"treatment", treatment},
                {"tcp", tcp},             {"ocp", ocp},             {"covariates", covariates},
                {"delimiter", delimiter}, {"lenient", lenient},     {"intercept", !no_intercept}};
  }
};

inline json load_echo(const CsvLoad& l) {
  return json{{"rows_read", l.rows_read},
              {"rows_used", l.data.n()},
              {"dropped_missing", l.dropped_missing},
              {"dropped_unparsable", l.dropped_unparsable}};
}

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"Causal effect estimation with possibly invalid confounding proxies"};
    app.require_subcommand(1);
    app.add_option("--threads", g_.threads, "worker threads (default: all cores); results do not depend on it");
    app.add_option("--seed", g_.seed, "overrides the seed in the config");
    app.add_option("--out", g_.out, "report path (default: stdout)");
    app.add_option("--format", g_.format, "json or table")->check(CLI::IsMember({"json", "structured", "table"}));
    app.add_flag("--timing", g_.timing, "record wall-clock time in the report");
    app.add_option("--config", g_.config, "JSON run configuration");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Monte Carlo study for the configured design");
    std::string export_csv;
    Index export_rep = 0;
    sim->add_option("--config", g_.config, "JSON run configuration");
    sim->add_option("--export-csv", export_csv, "write one simulated dataset instead of running the study");
    sim->add_option("--rep", export_rep, "replication index for --export-csv")->capture_default_str();

    // reproduce
    auto* rep = app.add_subcommand("reproduce", "rerun the grid behind one of the simulation tables");
    std::string table, scale = "desk";
    std::optional<int> reps;
    rep->add_option("--table", table, "t3, t4, t5 or t6")->required()->check(CLI::IsMember({"t3", "t4", "t5", "t6"}));
    rep->add_option("--scale", scale, "desk or full")->check(CLI::IsMember({"desk", "full"}))->capture_default_str();
    rep->add_option("--reps", reps, "override the replication count");
    rep->add_option("--config", g_.config, "JSON run configuration (estimator section)");

    // estimate
    auto* est = app.add_subcommand("estimate", "estimate the treatment effect from a CSV file");
    SchemaArgs est_schema;
    est_schema.attach(est, true);
    std::string mode = "single";
    Index ocp_index = 0;
    bool subsample = false;
    std::optional<int> sub_n;
    std::optional<Index> sub_b;
    std::optional<double> alpha;
    bool recentered = false;
    est->add_option("--mode", mode, "single (one OCP), median (all OCPs) or rotate")
        ->check(CLI::IsMember({"single", "median", "rotate"}))
        ->capture_default_str();
    est->add_option("--ocp-index", ocp_index, "zero-based OCP column for single mode")->capture_default_str();
    est->add_flag("--subsample", subsample, "add a subsampling CI");
    est->add_option("--subsample-n", sub_n, "number of subsamples N (default 1000)");
    est->add_option("--subsample-b", sub_b, "subsample size b (default floor(n^{4/5}))");
    est->add_flag("--recentered", recentered, "recentered subsampling quantiles");
    est->add_option("--alpha", alpha, "1 - confidence level (default 0.05)");
    est->add_option("--config", g_.config, "JSON run configuration");

    // identify
    auto* idf = app.add_subcommand("identify", "subset-consistency identification check");
    std::vector<double> delta, gamma;
    Index bound = 0;
    std::optional<double> tol;
    SchemaArgs id_schema;
    id_schema.attach(idf, false);
    Index id_ocp = 0;
    idf->add_option("--delta", delta, "first-stage OCP coefficients on the TCPs")->delimiter(',');
    idf->add_option("--gamma", gamma, "reduced-form outcome coefficients on the TCPs")->delimiter(',');
    idf->add_option("--bound", bound, "upper bound I on the number of invalid TCPs")->required();
    idf->add_option("--tol", tol, "agreement tolerance (default 1e-6)");
    idf->add_option("--ocp-index", id_ocp, "OCP column when reading data")->capture_default_str();

    // diagnose
    auto* dia = app.add_subcommand("diagnose", "irrepresentable value and restricted isometry margins");
    SchemaArgs dia_schema;
    dia_schema.attach(dia, true);
    Index dia_ocp = 0;
    std::vector<Index> invalid;
    std::optional<Index> s_z;
    std::optional<Index> rip_order;
    double max_supports = kRipMaxSupports;
    std::vector<std::string> checks{"irrepresentable", "theorem3"};
    dia->add_option("--ocp-index", dia_ocp, "OCP column")->capture_default_str();
    dia->add_option("--invalid", invalid, "one-based invalid TCP indices (default: adaptive selection)")->delimiter(',');
    dia->add_option("--s-z", s_z, "sparsity for the recovery margin (default: size of the invalid set)");
    dia->add_option("--rip-order", rip_order, "also compute RIP constants of the TCP matrix at this order");
    dia->add_option("--max-supports", max_supports, "refuse brute force beyond this many supports")->capture_default_str();
    dia->add_option("--checks", checks, "irrepresentable, theorem3, rip")
        ->delimiter(',')
        ->check(CLI::IsMember({"irrepresentable", "theorem3", "rip"}));

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      std::ostringstream o, e2;
      const int code = app.exit(e, o, e2);
      out_ << o.str();
      err_ << e2.str();
      return code == 0 ? 0 : 2;
    }

    try {
      const auto t0 = std::chrono::steady_clock::now();
      RunReport report;
      if (sim->parsed()) {
        if (!export_csv.empty()) return export_dataset(export_csv, export_rep);
        report = simulate();
      } else if (rep->parsed()) {
        report = reproduce(table, scale, reps);
      } else if (est->parsed()) {
        report = estimate(est_schema, mode, ocp_index, subsample, sub_n, sub_b, alpha, recentered);
      } else if (idf->parsed()) {
        report = identify_cmd(delta, gamma, bound, tol, id_schema, id_ocp);
      } else {
        if (rip_order && std::find(checks.begin(), checks.end(), "rip") == checks.end()) checks.push_back("rip");
        report = diagnose(dia_schema, dia_ocp, invalid, s_z, rip_order, max_supports, checks);
      }
      if (g_.timing)
        report.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      emit(report);
      return 0;
    } catch (const Error& e) {
      err_ << "error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return 1;
    }
  }

 private:
  RunConfig config() const { return g_.config.empty() ? RunConfig{} : parse_config(g_.config); }

  unsigned threads() const { return g_.threads == 0 ? default_threads() : g_.threads; }

  void emit(const RunReport& r) {
    const ReportFormat f = *parse_format(g_.format);
    if (g_.out.empty()) {
      out_ << format_report(r, f);
      return;
    }
    // write to a sibling temp file first so a failed run never leaves a partial report
    const std::string tmp = g_.out + ".partial";
    write_report(r, tmp, f);
    if (std::rename(tmp.c_str(), g_.out.c_str()) != 0) {
      std::remove(tmp.c_str());
      fail(ErrorKind::IoError, "cannot move report into place at '" + g_.out + "'");
    }
  }

  int export_dataset(const std::string& path, Index rep) {
    RunConfig cfg = config();
    if (g_.seed) cfg.simulation.seed = *g_.seed;
    write_csv(simulate_draw(cfg.simulation, rep).data, path);
    return 0;
  }

  RunReport simulate() {
    RunConfig cfg = config();
    if (g_.seed) cfg.simulation.seed = *g_.seed;
    MonteCarloOptions opt;
    opt.methods = cfg.monte_carlo.methods;
    opt.estimator = cfg.estimator;
    opt.subsample_replicates = cfg.monte_carlo.subsample_replicates;
    opt.subsample_size = cfg.monte_carlo.subsample_size;
    opt.subsample_recentered = cfg.monte_carlo.subsample_recentered;
    opt.max_failure_rate = cfg.monte_carlo.max_failure_rate;
    opt.threads = threads();
    RunReport r;
    r.command = "simulate";
    r.config = to_json(cfg);
    r.seed = cfg.simulation.seed;
    r.monte_carlo.push_back(run_monte_carlo(cfg.simulation, opt, "simulate"));
    return r;
  }

  RunReport reproduce(const std::string& table, const std::string& scale, std::optional<int> reps) {
    RunConfig cfg = config();
    const std::uint64_t seed = g_.seed ? *g_.seed : cfg.simulation.seed;
    RunReport r;
    r.command = "reproduce";
    r.seed = seed;
    json echo = to_json(cfg);
    echo["table"] = table;
    echo["scale"] = scale;
    echo["reps"] = reps ? json(*reps) : json(nullptr);
    r.config = echo;
    for (auto& job : table_jobs(*parse_table(table), *parse_scale(scale), reps, seed)) {
      job.options.estimator = cfg.estimator;
      job.options.threads = threads();
      r.monte_carlo.push_back(run_monte_carlo(job.config, job.options, job.label));
    }
    return r;
  }

  RunReport estimate(const SchemaArgs& schema, const std::string& mode, Index ocp_index, bool subsample,
                     std::optional<int> sub_n, std::optional<Index> sub_b, std::optional<double> alpha,
                     bool recentered) {
    RunConfig cfg = config();
    if (alpha) cfg.estimator.alpha_level = *alpha;
    if (sub_n) cfg.subsample.replicates = *sub_n;
    if (sub_b) cfg.subsample.size = *sub_b;
    if (recentered) cfg.subsample.recentered = true;
    cfg.estimator.threads = threads();
    const std::uint64_t seed = g_.seed ? *g_.seed : cfg.simulation.seed;
    const CsvLoad loaded = schema.load();
    const Dataset& data = loaded.data;

    RunReport r;
    r.command = "estimate";
    r.seed = seed;
    json echo = to_json(cfg);
    echo.erase("simulation");
    echo.erase("monte_carlo");
    echo["schema"] = schema.echo();
    echo["rows"] = load_echo(loaded);
    echo["mode"] = mode;
    echo["ocp_index"] = ocp_index;
    echo["subsample_enabled"] = subsample;
    r.config = echo;

    SubsampleOptions so;
    so.replicates = cfg.subsample.replicates;
    so.size = cfg.subsample.size;
    so.alpha_level = cfg.estimator.alpha_level;
    so.seed = seed;
    so.recentered = cfg.subsample.recentered;
    so.max_failure_rate = cfg.subsample.max_failure_rate;
    so.threads = threads();
    EstimatorConfig inner = cfg.estimator;
    inner.threads = 1;

    if (mode == "single") {
      ProxyEstimate e = estimate_invalid_tcp(data, ocp_index, cfg.estimator);
      r.ocp_table.push_back(summarize_run(data, ocp_index, e));
      if (subsample)
        r.subsample = subsample_ci(
            data, [&](const Dataset& d) { return estimate_invalid_tcp(d, ocp_index, inner).beta_hat; }, so);
      r.estimates.push_back(std::move(e));
    } else if (mode == "median") {
      ProxyEstimate e = estimate_invalid_tcp_ocp(data, cfg.estimator);
      r.ocp_table = e.per_ocp;
      r.median_beta = e.beta_hat;
      if (subsample) {
        r.subsample = subsample_ci(data, inner, so);
        e.ci_lower = r.subsample->lower;
        e.ci_upper = r.subsample->upper;
      }
      r.estimates.push_back(std::move(e));
    } else {
      RotationResult rot = rotate_ocp(data, cfg.estimator);
      r.ocp_table = std::move(rot.rows);
      r.median_beta = rot.median_beta;
    }
    return r;
  }

  RunReport identify_cmd(const std::vector<double>& delta, const std::vector<double>& gamma, Index bound,
                         std::optional<double> tol, const SchemaArgs& schema, Index ocp) {
    Theorem1Options opt;
    if (tol) opt.tol = *tol;
    RunReport r;
    r.command = "identify";
    json echo{{"bound", bound}, {"tol", opt.tol}};
    Vector d, g;
    if (!schema.data.empty()) {
      if (!delta.empty() || !gamma.empty())
        fail(ErrorKind::InvalidArgument, "give either --data or --delta/--gamma, not both");
      const CsvLoad loaded = schema.load();
      const FirstStage fs = first_stage(loaded.data, ocp);
      d = fs.delta_hat.head(fs.p_z);
      g = fs.gamma_hat.head(fs.p_z);
      echo["schema"] = schema.echo();
      echo["rows"] = load_echo(loaded);
      echo["ocp_index"] = ocp;
    } else {
      if (delta.empty() || delta.size() != gamma.size())
        fail(ErrorKind::InvalidArgument, "--delta and --gamma must be given with equal lengths");
      d = Eigen::Map<const Vector>(delta.data(), static_cast<Index>(delta.size()));
      g = Eigen::Map<const Vector>(gamma.data(), static_cast<Index>(gamma.size()));
    }
    echo["delta"] = std::vector<double>(d.data(), d.data() + d.size());
    echo["gamma"] = std::vector<double>(g.data(), g.data() + g.size());
    r.config = echo;
    IdentificationReport rep = check_theorem1(d, g, bound, opt);
    // majority status is reported alongside the full scan
    echo["majority_rule"] = check_majority_rule(d.size(), bound);
    r.config = echo;
    r.identification = std::move(rep);
    return r;
  }

  RunReport diagnose(const SchemaArgs& schema, Index ocp, std::vector<Index> invalid, std::optional<Index> s_z,
                     std::optional<Index> rip_order, double max_supports, const std::vector<std::string>& checks) {
    RunConfig cfg = config();
    const CsvLoad loaded = schema.load();
    const Dataset& data = loaded.data;
    auto wants = [&](const char* c) { return std::find(checks.begin(), checks.end(), c) != checks.end(); };

    const FirstStage fs = first_stage(data, ocp, cfg.estimator.rank_tol);
    const ReducedDesign rd = reduced_design(data, fs, cfg.estimator.rank_tol);
    IndexSet inv;
    Vector signs;
    if (!invalid.empty()) {
      for (Index j : invalid) {
        if (j < 1 || j > data.p_z()) fail(ErrorKind::InvalidArgument, "--invalid indices are one-based TCP positions");
        inv.push_back(j - 1);
      }
      std::sort(inv.begin(), inv.end());
      inv.erase(std::unique(inv.begin(), inv.end()), inv.end());
      const Vector am = alpha_median(fs, median_gamma(fs, cfg.estimator.delta_floor));
      signs.resize(static_cast<Index>(inv.size()));
      for (std::size_t k = 0; k < inv.size(); ++k) signs(static_cast<Index>(k)) = am(inv[k]) >= 0.0 ? 1.0 : -1.0;
    } else if (wants("irrepresentable") || (wants("theorem3") && !s_z)) {
      EstimatorConfig ec = cfg.estimator;
      const AdaptiveSelection sel = adaptive_lasso_proximal(data, ocp, std::nullopt, ec);
      inv = sel.selected;
      signs.resize(static_cast<Index>(inv.size()));
      for (std::size_t k = 0; k < inv.size(); ++k)
        signs(static_cast<Index>(k)) = sel.alpha_ad(inv[k]) >= 0.0 ? 1.0 : -1.0;
    }

    RunReport r;
    r.command = "diagnose";
    json echo{{"schema", schema.echo()}, {"rows", load_echo(loaded)}, {"ocp_index", ocp},
              {"invalid_set", index_echo(inv)}, {"checks", checks}, {"max_supports", max_supports}};
    DiagnosticReport d;
    if (wants("irrepresentable") && !inv.empty() && static_cast<Index>(inv.size()) < data.p_z())
      d.irrepresentable = irrepresentable_diagnostic(rd.design, inv, signs);
    if (wants("theorem3")) {
      const Index s = s_z ? *s_z : static_cast<Index>(inv.size());
      echo["s_z"] = s;
      if (s >= 1) d.theorem3 = theorem3_condition(data.tcp, Matrix(fs.what), rd.d_tilde, s, max_supports);
    }
    if (wants("rip")) {
      if (!rip_order) fail(ErrorKind::InvalidArgument, "the rip check needs --rip-order");
      echo["rip_order"] = *rip_order;
      d.rip = rip_constants(data.tcp, *rip_order, max_supports);
    }
    r.config = echo;
    r.diagnostics = d;
    return r;
  }

  static json index_echo(const IndexSet& s) {
    json a = json::array();
    for (Index j : s) a.push_back(j + 1);
    return a;
  }

  std::ostream& out_;
  std::ostream& err_;
  GlobalOptions g_;
};

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Runner r(out, err);
  return r.run(argc, argv);
}

}  // namespace proxsel::cli
