#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace bagbayes {

// Runs body(0..n-1) across `threads` workers.  Callers write results into
// per-index slots, so outputs never depend on scheduling.  If several
// iterations throw, the exception from the smallest index is rethrown.
inline void parallel_for(long n, int threads, const std::function<void(long)>& body) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  const int workers = static_cast<int>(std::min<long>(threads, n));
  std::atomic<long> next{0};
  std::atomic<long> first_error_index{n};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));

  auto run = [&]() {
    for (;;) {
      const long i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
        long expected = first_error_index.load();
        while (i < expected && !first_error_index.compare_exchange_weak(expected, i)) {
        }
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();

  const long bad = first_error_index.load();
  if (bad < n) std::rethrow_exception(errors[static_cast<std::size_t>(bad)]);
}

}  // namespace bagbayes
