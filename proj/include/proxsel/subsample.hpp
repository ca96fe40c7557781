#pragma once

// Subsampling confidence intervals: recompute an estimator on N random
// size-b subsets (without replacement) and read off empirical quantiles.

#include <algorithm>
#include <concepts>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include "proxsel/dataset.hpp"
#include "proxsel/error.hpp"
#include "proxsel/estimators.hpp"
#include "proxsel/parallel.hpp"
#include "proxsel/rng.hpp"

namespace proxsel {

/// floor(n^{4/5})
inline Index default_subsample_size(Index n) {
  if (n < 1) fail(ErrorKind::InvalidArgument, "sample size must be positive");
  auto b = static_cast<Index>(std::floor(std::pow(static_cast<double>(n), 0.8)));
  // guard against pow landing a hair under an exact integer
  while (std::pow(static_cast<double>(b + 1), 1.25) <= static_cast<double>(n)) ++b;
  return b;
}

struct SubsampleOptions {
  int replicates = 1000;
  /// 0 picks floor(n^{4/5})
  Index size = 0;
  double alpha_level = 0.05;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  /// quantiles of sqrt(b)(est_b - est_n) mapped back at rate sqrt(n)
  bool recentered = false;
  double max_failure_rate = 0.2;
  unsigned threads = 1;
};

struct SubsampleResult {
  double lower = 0.0;
  double upper = 0.0;
  Index size = 0;
  int replicates = 0;
  int failures = 0;
  friend bool operator==(const SubsampleResult&, const SubsampleResult&) = default;
};

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) fail(ErrorKind::InvalidArgument, "quantile of an empty set");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Row indices of subsample k, sorted. Depends only on (seed, stream, k).
inline std::vector<Index> subsample_rows(Index n, Index b, std::uint64_t seed, std::uint64_t stream,
                                         std::uint64_t k) {
  CounterRng rng(seed, stream, k);
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(b));
  std::sample(all.begin(), all.end(), std::back_inserter(out), b, rng);
  return out;
}

/// estimator: Dataset -> double. Throwing proxsel::Error counts as a failed
/// subsample.
template <class Estimator>
  requires std::invocable<Estimator&, const Dataset&>
SubsampleResult subsample_ci(const Dataset& data, Estimator&& estimator, const SubsampleOptions& opt) {
  const Index n = data.n();
  const Index b = opt.size > 0 ? opt.size : default_subsample_size(n);
  if (opt.replicates < 1) fail(ErrorKind::InvalidArgument, "need at least one subsample");
  if (b >= n || b < 1) {
    std::ostringstream msg;
    msg << "subsample size b = " << b << " must satisfy 1 <= b < n = " << n;
    fail(ErrorKind::InvalidArgument, msg.str());
  }
  check_alpha_level(opt.alpha_level);

  const auto reps = static_cast<std::size_t>(opt.replicates);
  std::vector<std::optional<double>> est(reps);
  parallel_for(reps, opt.threads, [&](std::size_t k) {
    const auto rows = subsample_rows(n, b, opt.seed, opt.stream, k);
    try {
      est[k] = estimator(data.rows(rows));
    } catch (const Error&) {
      // counted below
    }
  });

  SubsampleResult out;
  out.size = b;
  out.replicates = opt.replicates;
  std::vector<double> ok;
  for (const auto& e : est) {
    if (e && std::isfinite(*e))
      ok.push_back(*e);
    else
      ++out.failures;
  }
  if (static_cast<double>(out.failures) > opt.max_failure_rate * static_cast<double>(opt.replicates) ||
      ok.empty()) {
    std::ostringstream msg;
    msg << out.failures << " of " << opt.replicates << " subsample runs failed";
    fail(ErrorKind::AggregateFailure, msg.str());
  }
  const double lo_p = opt.alpha_level / 2.0;
  const double hi_p = 1.0 - opt.alpha_level / 2.0;

  if (!opt.recentered) {
    std::sort(ok.begin(), ok.end());
    out.lower = sorted_quantile(ok, lo_p);
    out.upper = sorted_quantile(ok, hi_p);
    return out;
  }
  const double full = estimator(data);
  const double rb = std::sqrt(static_cast<double>(b));
  const double rn = std::sqrt(static_cast<double>(n));
  std::vector<double> roots;
  roots.reserve(ok.size());
  for (double e : ok) roots.push_back(rb * (e - full));
  std::sort(roots.begin(), roots.end());
  out.lower = full - sorted_quantile(roots, hi_p) / rn;
  out.upper = full - sorted_quantile(roots, lo_p) / rn;
  return out;
}

/// Subsampling CI for the median-over-OCPs estimator.
inline SubsampleResult subsample_ci(const Dataset& data, const EstimatorConfig& cfg, const SubsampleOptions& opt) {
  EstimatorConfig inner = cfg;
  inner.threads = 1;
  return subsample_ci(
      data, [&](const Dataset& d) { return estimate_invalid_tcp_ocp(d, inner).beta_hat; }, opt);
}

}  // namespace proxsel
