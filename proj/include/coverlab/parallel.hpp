#pragma once

#include <cstddef>
#include <functional>

namespace coverlab {

// Worker count: hardware concurrency, capped by COVERLAB_THREADS when set.
int worker_count();

// Runs body(i) for i in [0, count) on up to worker_count() threads. Callers store results by
// index and reduce in index order, so outputs do not depend on scheduling. The first exception
// thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace coverlab
