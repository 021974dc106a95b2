#pragma once

#include <cstddef>
#include <functional>

namespace scatter {

/// Worker count: SCATTER_THREADS if set and positive, else the hardware concurrency.
unsigned thread_count();

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker,
/// so bodies that write only to slot i give results independent of the
/// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace scatter
