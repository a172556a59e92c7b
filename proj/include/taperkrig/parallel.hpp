#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace taperkrig {

// 0 means "use all hardware threads".
inline int resolve_threads(int n_threads) {
  if (n_threads > 0) return n_threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Work is handed out in fixed-size blocks so
// results written to disjoint per-index slots do not depend on the thread
// count. The first exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int n_threads, Fn&& fn) {
  const int threads = std::min<std::size_t>(resolve_threads(n_threads), std::max<std::size_t>(n, 1));
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);

  const std::size_t block = std::max<std::size_t>(1, (n + 8 * threads - 1) / (8 * threads));
  std::atomic<std::size_t> next{0};

  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t begin = next.fetch_add(block);
        if (begin >= n) return;
        const std::size_t end = std::min(n, begin + block);
        try {
          for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace taperkrig
