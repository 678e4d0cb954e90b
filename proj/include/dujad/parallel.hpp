#pragma once

#include <cstddef>
#include <functional>

namespace dujad {

// Worker count from DUJAD_WORKERS, else hardware concurrency (at least 1).
int worker_count();

// Runs body(i) for i in [0, n) on up to `workers` threads. Each index runs
// exactly once; callers store results by index so output order never depends
// on scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int workers = worker_count());

}  // namespace dujad
