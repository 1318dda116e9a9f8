#pragma once

#include <cstddef>
#include <functional>

namespace pathflow {

/// Worker cap. Initialised from PATHFLOW_THREADS (default: hardware concurrency).
int thread_count();
void set_thread_count(int n);

/// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per worker.
/// Callers must write results into per-index slots; chunking never affects values.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

/// Fixed block size used for deterministic reductions (independent of thread count).
inline constexpr std::size_t kReductionBlock = 1024;

}  // namespace pathflow
