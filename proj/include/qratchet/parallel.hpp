#ifndef QRATCHET_PARALLEL_HPP
#define QRATCHET_PARALLEL_HPP

#include <functional>

namespace qratchet {

// Runs fn(i) for i in [0, n) on up to n_threads workers with a static
// index partition, so any per-index output layout is schedule-independent.
// The first exception thrown by a worker is rethrown on the caller.
void parallel_for(int n, int n_threads, const std::function<void(int)>& fn);

// Same partition, but fn also receives the worker index owning i, for
// per-worker accumulators that are later reduced in worker order.
void parallel_for_workers(int n, int n_threads, const std::function<void(int, int)>& fn);

}  // namespace qratchet

#endif
