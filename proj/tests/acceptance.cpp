// Acceptance gate. `acceptance <id>` runs one criterion, no argument runs all.
// Each criterion prints one line: PASS or FAIL, its number and the measured
// values. Exit status is nonzero if any selected criterion fails.

#include "kkt_audit.hpp"
#include "oracles.hpp"

#include <commands.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

using namespace proxsel;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [miss: " << what << "]";
    }
  }
};

std::string f3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

const MethodMetrics& row(const MonteCarloReport& r, Method m) {
  const MethodMetrics* p = r.find(m);
  if (!p) throw std::runtime_error(std::string("report has no row for ") + to_string(m));
  return *p;
}

// Monte Carlo standard error of a standard deviation estimated from R draws
double sd_mcse(double sd, int reps) { return sd / std::sqrt(2.0 * (reps - 1)); }

unsigned threads() { return default_threads(); }

// --------------------------------------------------------------------------

void table3(Verdict& v) {
  SimConfig c;
  c.n = 2500;
  c.reps = 500;
  MonteCarloOptions o;
  o.threads = threads();
  const auto t0 = std::chrono::steady_clock::now();
  const MonteCarloReport r = run_monte_carlo(c, o, "table 3, n = 2500");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto& a = row(r, Method::adaptive);
  const auto& orc = row(r, Method::oracle);
  const auto& nv = row(r, Method::naive);
  const auto& ols = row(r, Method::ols);
  v.detail << "adaptive cov " << f3(*a.coverage) << " bias " << f3(a.bias) << " rmse " << f3(a.rmse)
           << "; oracle cov " << f3(*orc.coverage) << "; naive bias " << f3(nv.bias) << " cov " << f3(*nv.coverage)
           << "; ols bias " << f3(ols.bias) << " cov " << f3(*ols.coverage) << "; " << f3(secs) << " s on "
           << o.threads << " thread(s)";
  v.check(*a.coverage >= 0.91 && *a.coverage <= 0.97, "adaptive coverage in [0.91, 0.97]");
  v.check(std::abs(a.bias) <= 0.01, "adaptive |bias| <= 0.01");
  v.check(a.rmse <= 0.015, "adaptive rmse <= 0.015");
  v.check(*orc.coverage >= 0.91 && *orc.coverage <= 0.97, "oracle coverage in [0.91, 0.97]");
  v.check(nv.bias >= 0.13 && nv.bias <= 0.18, "naive bias in [0.13, 0.18]");
  v.check(*nv.coverage <= 0.05, "naive coverage <= 0.05");
  v.check(ols.bias >= 0.59 && ols.bias <= 0.62, "ols bias in [0.59, 0.62]");
  v.check(*ols.coverage == 0.0, "ols coverage = 0");
}

void table4(Verdict& v) {
  std::vector<MonteCarloReport> rows;
  for (auto& job : table_jobs(TableId::t4, Scale::desk)) {
    job.options.methods = {Method::adaptive};
    job.options.threads = threads();
    rows.push_back(run_monte_carlo(job.config, job.options, job.label));
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& a = row(rows[k], Method::adaptive);
    v.detail << (k ? " " : "") << "s_z=" << k + 1 << ":" << f3(*a.coverage) << "/" << f3(*a.ci_length) << "/"
             << f3(a.se);
    if (k < 4) v.check(*a.coverage >= 0.90, "coverage >= 0.90 at s_z = " + std::to_string(k + 1));
  }
  v.detail << " (cov/len/se)";
  const auto& s4 = row(rows[3], Method::adaptive);
  const auto& s5 = row(rows[4], Method::adaptive);
  const int reps = rows[3].reps;
  // interval length is a smooth function of the estimated SE; its Monte Carlo
  // error is taken with the same relative size as that of the SE
  v.check(*s5.ci_length > *s4.ci_length - sd_mcse(*s4.ci_length, reps), "length larger at s_z = 5");
  v.check(s5.se > s4.se - sd_mcse(s4.se, reps), "SE larger at s_z = 5");
}

void table5(Verdict& v) {
  auto jobs = table_jobs(TableId::t5, Scale::desk);
  TableJob job = jobs[1];  // n = 2500
  job.options.methods = {Method::median};
  job.options.threads = threads();
  const MonteCarloReport r = run_monte_carlo(job.config, job.options, job.label);
  const auto& m = row(r, Method::median);
  v.detail << "median bias " << f3(m.bias) << " rmse " << f3(m.rmse) << " subsample cov " << f3(*m.coverage)
           << " len " << f3(*m.ci_length) << " (N = " << job.options.subsample_replicates << ", reps = " << r.reps
           << ")";
  v.check(std::abs(m.bias) <= 0.03, "|bias| <= 0.03");
  v.check(*m.coverage >= 0.93, "coverage >= 0.93");
}

void table6(Verdict& v) {
  SimConfig c;
  c.n = 2500;
  c.s_z = 5;
  c.p_w = 10;
  c.s_w = 6;
  c.reps = 100;
  MonteCarloOptions o;
  o.methods = {Method::median};
  o.threads = threads();
  const MonteCarloReport r = run_monte_carlo(c, o, "table 6, s_z = 5, s_w = 6");
  const auto& m = row(r, Method::median);
  v.detail << "median-over-OCP bias " << f3(m.bias) << " se " << f3(m.se) << " rmse " << f3(m.rmse)
           << " (failed runs " << r.failed_runs << ")";
  v.check(m.bias <= -1.0, "bias <= -1.0");
}

void equivalence(Verdict& v) {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  int instances = 0;
  for (int trial = 0; trial < 100; ++trial) {
    SimConfig c;
    c.n = 20 + static_cast<Index>(rng() % 41);
    c.p_z = 2 + static_cast<Index>(rng() % 3);
    c.s_z = static_cast<Index>(rng() % static_cast<std::uint64_t>(c.p_z / 2 + 1));
    c.seed = 7000 + static_cast<std::uint64_t>(trial);
    const Dataset data = generate_invalid_tcp_data(c, 0);
    const ReducedDesign rd = reduced_design(data, first_stage(data, 0));
    const double lmax = lasso_lambda_max(rd.design, data.outcome, Vector::Ones(c.p_z));
    const double lambda = lmax * std::pow(10.0, -2.0 + 1.9 * unif(rng));
    const LassoProximalResult two = lasso_proximal(data, 0, lambda);
    const oracle::JointSolution joint = oracle::joint_minimizer(data, 0, lambda);
    worst = std::max(worst, std::abs(two.beta_hat - joint.beta));
    worst = std::max(worst, (two.alpha_hat - joint.alpha).cwiseAbs().maxCoeff());
    ++instances;
  }
  v.detail << instances << " instances, largest coordinate gap " << worst;
  v.check(instances == 100 && worst <= 1e-5, "two-step within 1e-5 of the joint minimizer");
}

void oracle_reduction(Verdict& v) {
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    SimConfig c;
    c.n = 300 + 20 * k;
    c.s_z = k % 5;
    const Dataset data = generate_invalid_tcp_data(c, k);
    IndexSet truth;
    for (Index j = 0; j < c.s_z; ++j) truth.push_back(j);
    const double a = post_adaptive_2sls(data, 0, truth).beta_hat;
    const double b = oracle_p2sls(data, truth).beta_hat;
    worst = std::max(worst, std::abs(a - b));
  }
  v.detail << "100 datasets, largest |beta gap| " << worst;
  v.check(worst <= 1e-10, "post-selection equals oracle within 1e-10");
}

void identification(Verdict& v) {
  Vector d(4), g1(4), g2(4);
  d << 1, 2, 3, 4;
  g1 << 1, 2, 3, 8;
  g2 << 1, 2, 6, 8;
  const bool ex1 = check_theorem1(d, g1, 3).identified;
  const bool ex2 = check_theorem1(d, g2, 3).identified;
  v.check(ex1, "example 1 identified");
  v.check(!ex2, "example 2 not identified");

  std::mt19937_64 rng(707);
  std::normal_distribution<double> nd;
  int contradictions = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index p = 2 + trial % 11;
    const Index bound = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(p / 2));
    Vector dd(p), gg(p);
    const double q = nd(rng);
    for (Index j = 0; j < p; ++j) {
      dd(j) = nd(rng);
      if (std::abs(dd(j)) < 0.05) dd(j) = 0.05;
      gg(j) = q * dd(j);
    }
    for (Index j = 0; j < bound; ++j) gg(rng() % static_cast<std::uint64_t>(p)) += 3.0 * nd(rng);
    if (check_majority_rule(p, bound) && !check_theorem1(dd, gg, bound).identified) ++contradictions;
  }
  v.detail << "example 1 " << (ex1 ? "identified" : "not identified") << ", example 2 "
           << (ex2 ? "identified" : "not identified") << ", 1000 majority-rule draws with " << contradictions
           << " contradictions";
  v.check(contradictions == 0, "no contradiction with the enumeration");
}

void kkt_and_rip(Verdict& v) {
  // a lasso workload of our own so the criterion also stands alone
  std::mt19937_64 rng(808);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 100; ++t) {
    Matrix x(30, 6);
    Vector y(30);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
    for (Index i = 0; i < y.size(); ++i) y(i) = nd(rng);
    lasso_solve(x, y, (0.05 + 0.9 * (t % 10) / 10.0) * lasso_lambda_max(x, y, Vector::Ones(6)));
  }
  SimConfig c;
  c.n = 800;
  for (int k = 0; k < 20; ++k) estimate_invalid_tcp(generate_invalid_tcp_data(c, k), 0);
  EstimatorConfig cv;
  cv.adaptive_lambda.mode = LambdaMode::cv;
  for (int k = 0; k < 3; ++k) estimate_invalid_tcp(generate_invalid_tcp_data(c, k), 0, cv);

  const long calls = kkt_audit::calls.load();
  const long failures = kkt_audit::failures.load();
  v.detail << calls << " lasso solves audited, " << failures << " stationarity failures (worst "
           << kkt_audit::worst << ")";
  v.check(calls > 0 && failures == 0, "every solve satisfies KKT at 1e-6");

  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Index rows = 6 + t % 5, cols = 3 + t % 4;
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng) / std::sqrt(static_cast<double>(rows));
    const RipConstants r = rip_constants(m, 2);
    const auto [lo, hi] = oracle::rip2_sweep(m);
    worst = std::max({worst, std::abs(r.lower - lo), std::abs(r.upper - hi)});
  }
  v.detail << "; RIP vs sweep on 50 matrices, worst gap " << worst;
  v.check(worst <= 1e-6, "RIP within 1e-6 of the sweep");
}

// --------------------------------------------------------------------------
// CLI determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "proxsel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

void determinism(Verdict& v) {
  const fs::path dir = fs::temp_directory_path() / ("proxsel_accept_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  auto path = [&](const std::string& n) { return (dir / n).string(); };
  {
    std::ofstream(dir / "sim.json") << R"({"simulation": {"n": 600, "reps": 6, "p_w": 4, "s_w": 1},
      "monte_carlo": {"methods": ["adaptive_proximal", "oracle", "naive_p2sls", "ols", "median_ocp"], "subsample_replicates": 20}})";
    std::ofstream(dir / "est.json") << R"({"subsample": {"replicates": 40}})";
  }
  const std::string tcp = "Z1,Z2,Z3,Z4,Z5,Z6,Z7,Z8,Z9,Z10";
  if (cli({"--config", path("sim.json"), "simulate", "--export-csv", path("d.csv"), "--rep", "2"}) != 0) {
    v.check(false, "export");
    return;
  }

  const std::map<std::string, std::vector<std::string>> commands{
      {"simulate", {"--config", path("sim.json"), "simulate"}},
      {"reproduce", {"reproduce", "--table", "t6", "--reps", "2"}},
      {"estimate-single", {"--config", path("est.json"), "estimate", "--data", path("d.csv"), "--tcp", tcp, "--ocp",
                           "W1,W2,W3,W4", "--subsample"}},
      {"estimate-median", {"--config", path("est.json"), "estimate", "--data", path("d.csv"), "--tcp", tcp, "--ocp",
                           "W1,W2,W3,W4", "--mode", "median", "--subsample", "--recentered"}},
      {"estimate-rotate", {"estimate", "--data", path("d.csv"), "--tcp", tcp, "--ocp", "W1,W2,W3,W4", "--mode",
                           "rotate"}},
      {"identify", {"identify", "--data", path("d.csv"), "--tcp", tcp, "--ocp", "W1,W2,W3,W4", "--bound", "4"}},
      {"diagnose", {"diagnose", "--data", path("d.csv"), "--tcp", tcp, "--ocp", "W1,W2,W3,W4", "--rip-order", "3"}},
  };
  int compared = 0;
  for (const auto& [name, args] : commands) {
    std::vector<std::string> outputs;
    for (const char* t : {"1", "4", "1", "3"}) {
      const std::string out = path(name + "_" + std::to_string(outputs.size()) + ".json");
      std::vector<std::string> a{"--threads", t, "--seed", "314", "--out", out};
      a.insert(a.end(), args.begin(), args.end());
      if (cli(a) != 0) {
        v.check(false, name + " exited nonzero");
        break;
      }
      outputs.push_back(slurp(out));
    }
    bool same = outputs.size() == 4;
    for (const auto& o : outputs) same = same && o == outputs.front() && !o.empty();
    v.check(same, name + " byte-identical across thread counts");
    compared += same;
  }

  // the installed binary as a separate process
  const std::string exe = PROXSEL_CLI_PATH;
  bool binary_same = true;
  for (const char* t : {"1", "4"}) {
    const std::string cmd = exe + " --threads " + t + " --config " + path("sim.json") + " --out " +
                            path(std::string("bin_") + t + ".json") + " simulate";
    binary_same = binary_same && std::system(cmd.c_str()) == 0;
  }
  binary_same = binary_same && !slurp(path("bin_1.json")).empty() &&
                slurp(path("bin_1.json")) == slurp(path("bin_4.json"));
  v.check(binary_same, "binary output identical for 1 and 4 threads");
  v.detail << compared << "/" << commands.size() << " commands identical over threads {1, 4, 1, 3}; binary "
           << (binary_same ? "identical" : "differs");
  fs::remove_all(dir);
}

const std::map<int, std::pair<const char*, std::function<void(Verdict&)>>>& criteria() {
  static const std::map<int, std::pair<const char*, std::function<void(Verdict&)>>> c{
      {1, {"table 3 desk reproduction", table3}},
      {2, {"table 4 trend", table4}},
      {3, {"table 5 median over OCPs with subsampling", table5}},
      {4, {"table 6 breakdown cell", table6}},
      {5, {"two-step vs joint minimizer", equivalence}},
      {6, {"oracle reduction", oracle_reduction}},
      {7, {"identification examples and fuzzing", identification}},
      {8, {"KKT certification and RIP", kkt_and_rip}},
      {9, {"CLI determinism", determinism}},
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (!criteria().count(id)) {
      std::cerr << "unknown criterion '" << argv[i] << "' (expected 1-9)\n";
      return 2;
    }
    ids.push_back(id);
  }
  if (ids.empty())
    for (const auto& [id, c] : criteria()) ids.push_back(id);

  bool all = true;
  for (int id : ids) {
    const auto& [name, fn] = criteria().at(id);
    Verdict v;
    try {
      fn(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " threw: " << e.what();
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << v.detail.str()
              << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
