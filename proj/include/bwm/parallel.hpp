#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace bwm {

inline unsigned worker_count() {
  if (const char* s = std::getenv("BWM_THREADS")) {
    long v = std::strtol(s, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  unsigned h = std::thread::hardware_concurrency();
  return h ? h : 1;
}

// Index-parallel loop.  body(i) must write results keyed by i only, so the
// outcome is independent of scheduling.  First exception is rethrown.
template <class F>
void parallel_for(std::size_t n, F&& body, unsigned threads = worker_count()) {
  if (n == 0) return;
  threads = static_cast<unsigned>(
      std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::atomic_flag err_claimed = ATOMIC_FLAG_INIT;
  const std::size_t chunk = std::max<std::size_t>(1, n / (threads * 8u));
  auto worker = [&]() {
    for (;;) {
      if (failed.load(std::memory_order_relaxed)) return;
      std::size_t i0 = next.fetch_add(chunk);
      if (i0 >= n) return;
      std::size_t i1 = std::min(n, i0 + chunk);
      try {
        for (std::size_t i = i0; i < i1; ++i) body(i);
      } catch (...) {
        if (!err_claimed.test_and_set()) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace bwm
