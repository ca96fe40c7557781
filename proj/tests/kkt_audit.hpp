#pragma once

// Include before any proxsel header. Every LASSO solution returned by the
// library is re-checked here against the stationarity conditions, with the
// gradient recomputed from the Gram statistics by hand.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>

namespace kkt_audit {

inline constexpr double kTol = 1e-6;

inline std::atomic<long> calls{0};
inline std::atomic<long> failures{0};
inline std::mutex worst_mu;
inline double worst = 0.0;

template <class Gram, class Weights, class Fit>
void record(const Gram& g, double lambda, const Weights& w, const Fit& fit) {
  const auto& a = fit.coefficients;
  const auto p = a.size();
  double v = 0.0;
  for (decltype(a.size()) j = 0; j < p; ++j) {
    double grad = -g.xty(j);
    for (decltype(a.size()) k = 0; k < p; ++k) grad += g.gram(j, k) * a(k);
    const double pen = lambda * w(j);
    double e;
    if (a(j) > 0.0)
      e = std::abs(grad + pen);
    else if (a(j) < 0.0)
      e = std::abs(grad - pen);
    else
      e = std::max(0.0, std::abs(grad) - pen);
    v = std::max(v, e);
  }
  ++calls;
  if (!(v <= kTol)) ++failures;
  std::lock_guard lock(worst_mu);
  worst = std::max(worst, v);
}

}  // namespace kkt_audit

#define PROXSEL_LASSO_AUDIT(gram, lambda, weights, fit) ::kkt_audit::record(gram, lambda, weights, fit)
