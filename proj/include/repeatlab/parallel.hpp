#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "repeatlab/common.hpp"

namespace repeatlab {

// Worker count resolution: explicit argument wins, then REPEATLAB_WORKERS,
// then 1. Results are always keyed by task index, so output is identical for
// any worker count.
inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("REPEATLAB_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw ConfigError("REPEATLAB_WORKERS must be a positive integer");
  }
  return 1;
}

// Run fn(i) for i in [0, n) across `workers` threads. fn must only touch
// state owned by index i. First exception wins and is rethrown on the caller.
inline void parallel_for(long n, int workers, const std::function<void(long)>& fn) {
  if (n <= 0) return;
  workers = std::max(1, static_cast<int>(std::min<long>(workers, n)));
  if (workers == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        long i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
        }
      }
    });
  }
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Map [0,n) -> R deterministically; results land in index order.
template <typename R>
std::vector<R> parallel_map(long n, int workers, const std::function<R(long)>& fn) {
  std::vector<R> out(static_cast<size_t>(n));
  parallel_for(n, workers, [&](long i) { out[static_cast<size_t>(i)] = fn(i); });
  return out;
}

}  // namespace repeatlab
