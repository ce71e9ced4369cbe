#pragma once

#include <cstddef>
#include <functional>

namespace lff {

/// Caps the number of worker threads used by parallel kernels. 0 selects the
/// machine's hardware concurrency.
void set_num_threads(unsigned n);
unsigned num_threads();

/// Runs body(i) for every i in [0, count). Each index is processed by exactly
/// one worker and the per-index work must not depend on the worker, so results
/// are independent of the thread count. Exceptions from the body are rethrown
/// on the calling thread (first by index).
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace lff
