// Simulate one dataset with three invalid TCPs and compare estimators.
#include <cstdio>

#include "proxsel/proxsel.hpp"

int main() {
  using namespace proxsel;
  SimConfig cfg;  // n = 2500, 10 TCPs, first 3 invalid, one valid OCP
  const Dataset data = generate_invalid_tcp_data(cfg, 0);

  const ProxyEstimate adaptive = estimate_invalid_tcp(data, 0);
  const ProxyEstimate oracle = oracle_p2sls(data, cfg.true_invalid_tcps());
  const ProxyEstimate naive = naive_p2sls(data);
  const ProxyEstimate plain = ols_baseline(data);

  std::printf("true beta %.3f\n", cfg.beta_true);
  for (const ProxyEstimate* e : {&adaptive, &oracle, &naive, &plain})
    std::printf("%-18s %8.4f  [%.4f, %.4f]\n", e->method.c_str(), e->beta_hat, *e->ci_lower, *e->ci_upper);

  std::printf("selected invalid TCPs:");
  for (Index j : adaptive.selected_invalid_tcps) std::printf(" %s", data.tcp_names[static_cast<std::size_t>(j)].c_str());
  std::printf("\n");
  return 0;
}
