#pragma once

#include <cstdint>
#include <functional>

namespace posebench {

// Number of workers parallel_for will use: hardware concurrency, optionally
// capped by the POSEBENCH_THREADS environment variable or a config value set
// through set_worker_cap. Always at least 1.
int worker_count();

// Process-wide cap applied on top of POSEBENCH_THREADS; 0 means no cap.
void set_worker_cap(int cap);

// Runs fn(i) for i in [0, n), statically partitioned into one contiguous
// chunk per worker. Results must be written to disjoint, index-addressed
// outputs; under that discipline the result is identical for any worker
// count. Reductions should store per-index partials and sum them in index
// order afterwards.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace posebench
