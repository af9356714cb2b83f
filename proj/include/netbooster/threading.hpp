#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace netbooster {

namespace detail {
inline int& worker_override() {
  static int n = 0;  // 0 = auto
  return n;
}
}  // namespace detail

/// Caps the worker count for batch-parallel kernels. 0 restores auto
/// (hardware concurrency). The NETBOOSTER_THREADS env var caps the result.
inline void set_worker_count(int n) { detail::worker_override() = n < 0 ? 0 : n; }

inline int worker_count() {
  int n = detail::worker_override();
  if (n == 0) {
    unsigned hw = std::thread::hardware_concurrency();
    n = hw == 0 ? 1 : static_cast<int>(hw);
  }
  if (const char* env = std::getenv("NETBOOSTER_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return std::max(1, n);
}

/// Runs fn(begin, end) over a fixed contiguous partition of [0, n). The
/// partition depends only on (n, worker_count()), so any per-chunk results
/// reduced in chunk order are reproducible for a fixed worker count.
template <class F>
void parallel_for_chunks(std::int64_t n, F&& fn) {
  const int workers = std::min<std::int64_t>(worker_count(), n);
  if (workers <= 1) {
    if (n > 0) fn(0, std::int64_t{0}, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int c = 0; c < workers; ++c) {
    std::int64_t begin = n * c / workers;
    std::int64_t end = n * (c + 1) / workers;
    threads.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
  }
  for (auto& t : threads) t.join();
}

inline int chunk_count(std::int64_t n) {
  return static_cast<int>(std::min<std::int64_t>(worker_count(), std::max<std::int64_t>(n, 1)));
}

}  // namespace netbooster
