#pragma once

#include <cstddef>
#include <functional>

namespace gmpslab {

/// Worker count: GMPSLAB_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
int worker_threads();

/// Calls fn(i) for i in [0, n) on up to worker_threads() threads. Callers
/// write results into slot i, so outcomes never depend on scheduling. The
/// caller's evaluation scope carries over to the workers. If any call throws,
/// the exception of the lowest index is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gmpslab
