#pragma once

#include <cstdint>
#include <functional>

namespace stylab {

/// Run fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once; callers must write only to per-index slots, which
/// keeps results identical to the serial order regardless of scheduling.
void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn);

int default_workers();

}  // namespace stylab
