#pragma once

#include <cstdint>
#include <functional>

namespace gateadapt {

/// Number of worker threads: min(hardware, GATE_ADAPT_THREADS if set).
int worker_count();

/// Runs body(begin, end) over a fixed static partition of [0, n).
/// Each index is processed by exactly one worker and every reduction
/// inside a chunk runs sequentially, so results do not depend on the
/// number of workers.
void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& body);

}  // namespace gateadapt
