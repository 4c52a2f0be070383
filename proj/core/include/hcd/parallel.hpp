#pragma once

#include <cstddef>
#include <functional>

namespace hcd {

/// Number of workers used by pixel- and tree-parallel loops. Defaults to the
/// hardware concurrency, capped by the HCD_THREADS environment variable and
/// by set_max_workers(). Never below 1.
std::size_t worker_count();

/// Process-wide cap on worker_count(); 0 removes the override.
void set_max_workers(std::size_t workers);

/// Splits [0, n) into contiguous chunks of at least `min_chunk` items and
/// runs `body(begin, end)` on each, possibly concurrently. Bodies must write
/// to disjoint outputs; the first exception thrown by any chunk is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 64);

}  // namespace hcd
