#pragma once

#include <cstddef>
#include <functional>

namespace pnmtrem {

/// Worker cap for parallel loops. Defaults to PNMTREM_THREADS from the
/// environment, else the hardware concurrency.
int thread_count();
void set_thread_count(int n);

/// Runs body(i) for i in [0, n) across up to thread_count() workers. Each
/// index is visited exactly once; callers write into per-index slots and
/// reduce afterwards in index order, so results do not depend on the
/// worker count. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace pnmtrem
