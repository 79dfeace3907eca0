#pragma once

#include <cstdint>
#include <functional>

namespace diffpose {

// Worker count: DIFFPOSE_THREADS if set (>=1), else hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, n).  With one worker this degenerates to a plain
// loop.  Callers must only write to per-index slots; any reduction happens
// afterwards in index order so results never depend on the thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace diffpose
