#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace wsimil {

inline int default_workers() {
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i, worker) for i in [0, n) on up to `workers` threads. Indices are
/// claimed dynamically; callers write results by index so output order never
/// depends on scheduling. The first exception is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const int count = static_cast<int>(
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers))));
  if (count <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(count);
  for (int w = 0; w < count; ++w) {
    threads.emplace_back([&, w] {
      for (;;) {
        if (failed.load()) return;
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i, w);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace wsimil
