#pragma once

#include <cstddef>
#include <functional>

namespace gsgw {

/// Worker count from GSGW_THREADS, else the hardware concurrency (at least 1).
std::size_t thread_count();

/// Runs body(i) for i in [0, n) over static contiguous chunks. Each index must
/// write only its own output slot; results then do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace gsgw
