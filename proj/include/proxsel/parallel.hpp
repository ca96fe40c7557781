#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace proxsel {

inline unsigned default_threads() noexcept {
  const unsigned h = std::thread::hardware_concurrency();
  return h == 0 ? 1u : h;
}

/// Calls fn(i) for i in [0, count). Work is handed out through an atomic
/// counter; callers write results into slot i so the outcome never depends on
/// scheduling. If any call throws, the exception with the lowest index is
/// rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (count == 0) return;
  if (threads == 0) threads = default_threads();
  if (threads > count) threads = static_cast<unsigned>(count);

  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }  // jthreads join here

  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace proxsel
