#pragma once

#include <cstddef>
#include <functional>

namespace pft {

// Worker count from PFT_THREADS (0 or unset = hardware concurrency).
size_t worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index is
// written by exactly one worker, so callers that store into slot i stay
// deterministic. The first exception thrown (lowest index) is rethrown.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace pft
