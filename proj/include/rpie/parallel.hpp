#pragma once

#include <cstddef>
#include <functional>

namespace rpie {

/// Worker count: RPIE_THREADS when set to a positive integer, otherwise the
/// number of hardware threads (at least 1).
std::size_t thread_budget();

/// Runs body(i) for i in [0, count) on up to `threads` workers. Work items
/// are claimed dynamically; callers write results into slot i so reductions
/// stay in index order. The first exception thrown by any item is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t threads = thread_budget());

}  // namespace rpie
