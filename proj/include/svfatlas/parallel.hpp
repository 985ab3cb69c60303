#pragma once

#include <cstddef>
#include <functional>

namespace svfatlas {

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). Each index is handled exactly once; the first exception
// thrown by any worker is rethrown on the caller's thread.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)> &fn);

} // namespace svfatlas
