#pragma once

#include <functional>

namespace tbeam {

// Worker count for data-parallel stream lanes: TBEAM_THREADS when set,
// otherwise the hardware concurrency.
int worker_count();

// Runs fn(0..n-1), striding the indices over the workers.  Falls back to the
// calling thread when a single worker suffices.  The first exception thrown
// by any worker is rethrown after all workers join.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace tbeam
