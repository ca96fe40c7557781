// Monte Carlo checks of the statistical behaviour. Slow; labelled
// "statistical" in ctest so it can be skipped with -LE statistical.

#include "helpers.hpp"

#include <numeric>

using namespace proxsel;
using Catch::Matchers::WithinAbs;

namespace {

unsigned threads() { return default_threads(); }

IndexSet first(Index k) {
  IndexSet s;
  for (Index j = 0; j < k; ++j) s.push_back(j);
  return s;
}

// share of replications whose selected set is exactly the true one
double selection_share(const SimConfig& c, const EstimatorConfig& ec) {
  std::vector<int> hit(static_cast<std::size_t>(c.reps), 0);
  parallel_for(hit.size(), threads(), [&](std::size_t r) {
    const Dataset d = generate_invalid_tcp_data(c, static_cast<Index>(r));
    hit[r] = estimate_invalid_tcp(d, 0, ec).selected_invalid_tcps == first(c.s_z);
  });
  return std::accumulate(hit.begin(), hit.end(), 0) / static_cast<double>(c.reps);
}

MonteCarloReport mc(SimConfig c, std::vector<Method> methods, int subsamples = 0) {
  MonteCarloOptions o;
  o.methods = std::move(methods);
  o.threads = threads();
  o.subsample_replicates = subsamples;
  return run_monte_carlo(c, o);
}

}  // namespace

TEST_CASE("adaptive selection is consistent at n = 5000", "[statistical]") {
  SimConfig c;
  c.n = 5000;
  c.reps = 200;
  const double share = selection_share(c, EstimatorConfig{});
  INFO("exact selection share " << share);
  CHECK(share >= 0.95);
}

TEST_CASE("cross-validated lambda recovers the support", "[statistical]") {
  SimConfig c;
  c.n = 5000;
  c.reps = 200;
  EstimatorConfig ec;
  ec.adaptive_lambda.mode = LambdaMode::cv;
  const double share = selection_share(c, ec);
  INFO("exact selection share " << share);
  CHECK(share >= 0.90);
}

TEST_CASE("one-SE cross-validation recovers the support", "[statistical]") {
  SimConfig c;
  c.n = 5000;
  c.reps = 200;
  EstimatorConfig ec;
  ec.adaptive_lambda.mode = LambdaMode::cv;
  ec.cv_one_se = true;
  const double share = selection_share(c, ec);
  INFO("exact selection share " << share);
  CHECK(share >= 0.90);
}

TEST_CASE("OLS bias does not depend on the true effect", "[statistical]") {
  SimConfig c;
  c.reps = 100;
  const MonteCarloReport a = mc(c, {Method::ols});
  c.beta_true = 2.0;
  const MonteCarloReport b = mc(c, {Method::ols});
  // same draws, Y shifted by (2 - 0.5) D: identical up to rounding
  CHECK_THAT(a.rows[0].bias, WithinAbs(b.rows[0].bias, 1e-10));
  CHECK_THAT(a.rows[0].se, WithinAbs(b.rows[0].se, 1e-10));
}

TEST_CASE("table 3 rows", "[statistical]") {
  for (auto& job : table_jobs(TableId::t3, Scale::desk)) {
    job.options.threads = threads();
    const MonteCarloReport r = run_monte_carlo(job.config, job.options, job.label);
    INFO(job.label);
    CHECK_THAT(r.find(Method::ols)->bias, WithinAbs(0.607, 0.01));
    CHECK(*r.find(Method::ols)->coverage == 0.0);
    CHECK_THAT(r.find(Method::naive)->bias, WithinAbs(0.156, 0.02));
    CHECK(std::abs(r.find(Method::oracle)->bias) <= 0.01);
    CHECK(std::abs(r.find(Method::adaptive)->bias) <= 0.01);
  }
}

TEST_CASE("table 4 trend", "[statistical]") {
  std::vector<MonteCarloReport> rows;
  for (auto& job : table_jobs(TableId::t4, Scale::desk)) {
    job.options.methods = {Method::adaptive, Method::naive};
    job.options.threads = threads();
    rows.push_back(run_monte_carlo(job.config, job.options, job.label));
  }
  const auto naive_cov = [&](std::size_t k) { return *rows[k].find(Method::naive)->coverage; };
  INFO("naive coverage at s_z = 1, 8: " << naive_cov(0) << ", " << naive_cov(7));
  CHECK(naive_cov(0) <= 0.05);
  CHECK(naive_cov(7) > naive_cov(0) + 0.2);
  // beyond the majority rule the adaptive estimator degrades
  const MethodMetrics& a3 = *rows[2].find(Method::adaptive);
  const MethodMetrics& a8 = *rows[7].find(Method::adaptive);
  CHECK(std::abs(a8.bias) > std::abs(a3.bias));
  CHECK(a8.se > a3.se);
}

TEST_CASE("median over OCPs at the table 5 design", "[statistical]") {
  SimConfig c;
  c.p_w = 10;
  c.s_w = 3;
  c.reps = 500;
  const MonteCarloReport r = mc(c, {Method::median});
  const MethodMetrics& m = r.rows[0];
  INFO("bias " << m.bias << " rmse " << m.rmse);
  CHECK(std::abs(m.bias) <= 0.03);
  CHECK(m.rmse <= 0.06);
}

TEST_CASE("RMSE grows with the number of invalid OCPs", "[statistical]") {
  std::vector<double> rmse;
  int reps = 0;
  for (Index sw = 3; sw <= 6; ++sw) {
    SimConfig c;
    c.p_w = 10;
    c.s_w = sw;
    c.s_z = 3;
    const MonteCarloReport r = mc(c, {Method::median});
    rmse.push_back(r.rows[0].rmse);
    reps = r.reps;
  }
  for (std::size_t k = 1; k < rmse.size(); ++k) {
    INFO("s_w = " << k + 2 << " -> " << k + 3 << ": " << rmse[k - 1] << " -> " << rmse[k]);
    // one Monte Carlo SE of an RMSE, normal approximation
    CHECK(rmse[k] >= rmse[k - 1] - rmse[k - 1] / std::sqrt(2.0 * reps));
  }
}
