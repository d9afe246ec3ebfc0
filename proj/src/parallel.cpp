#include "posebench/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace posebench {

namespace {

std::atomic<int> g_worker_cap{0};

int env_thread_cap() {
  const char* raw = std::getenv("POSEBENCH_THREADS");
  if (raw == nullptr) return 0;
  const int v = std::atoi(raw);
  return v > 0 ? v : 0;
}

}  // namespace

void set_worker_cap(int cap) { g_worker_cap.store(cap > 0 ? cap : 0); }

int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const int env_cap = env_thread_cap(); env_cap > 0) n = std::min(n, env_cap);
  if (const int cap = g_worker_cap.load(); cap > 0) n = std::min(n, cap);
  return n;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  if (n <= 0) return;
  const int workers = static_cast<int>(std::min<std::int64_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        // Keep only the first failure; the winner's write is guarded by the
        // exchange so no two threads race on first_error.
        if (!failed.exchange(true)) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed.load() && first_error) std::rethrow_exception(first_error);
}

}  // namespace posebench
