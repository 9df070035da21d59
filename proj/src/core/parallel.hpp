#pragma once

#include <cstddef>
#include <functional>

namespace ddnet {

// Worker count from DDNET_THREADS. Unset or 0 means single-threaded.
std::size_t worker_threads();

// Overrides the environment for the current process (0 = single-threaded).
void set_worker_threads(std::size_t n);

// Runs fn(begin_chunk, end_chunk) over [0, n) split into contiguous chunks.
// Callers must make each index's result independent of the chunking so that
// output is identical for every thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace ddnet
