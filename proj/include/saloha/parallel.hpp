#pragma once

#include <cstddef>
#include <functional>

namespace saloha {

/// Worker count: SALOHA_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
int worker_count();

/// Calls fn(k) for k in [0, count) on up to worker_count() threads. The first
/// exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, int workers = 0);

}  // namespace saloha
