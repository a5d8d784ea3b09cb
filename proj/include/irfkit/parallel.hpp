#pragma once

#include <cstddef>
#include <functional>

namespace irfkit {

/// Run body(i) for i in [0, n) on up to `threads` worker threads (0 means
/// hardware concurrency). Each index is executed exactly once; callers write
/// results into per-index slots, so output never depends on the thread
/// count. If any body throws, the exception of the smallest failing index is
/// rethrown after all workers have stopped.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace irfkit
