#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace entroscope {

// Worker width is a process-global knob (set once by the CLI from --workers).
// Every parallel construct below writes task results into preallocated slots
// and reduces them in a fixed order, so the width never changes any result.
inline std::atomic<int>& worker_count() {
  static std::atomic<int> n{1};
  return n;
}

inline void set_worker_count(int n) { worker_count().store(n < 1 ? 1 : n); }

// Fixed-order pairwise tree reduction. Summation order depends only on the
// length of the input, never on the execution schedule.
inline double pairwise_sum(const double* v, std::size_t n) {
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

// Static-partition parallel loop: task i runs exactly once, tasks own slot i
// of whatever output vector the caller prepares. With workers == 1 it runs
// inline on the calling thread.
inline void parallel_for(std::size_t n_tasks, const std::function<void(std::size_t)>& fn) {
  int workers = worker_count().load();
  if (workers <= 1 || n_tasks <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::size_t w = static_cast<std::size_t>(workers);
  if (w > n_tasks) w = n_tasks;
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(w);
  std::exception_ptr first_error = nullptr;
  std::atomic<bool> failed{false};
  std::mutex err_mutex;
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n_tasks) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mutex);
          if (!failed.exchange(true)) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failed.load() && first_error) std::rethrow_exception(first_error);
}

}  // namespace entroscope
