#pragma once

#include <cstddef>
#include <functional>

namespace pcluster {

/// Number of worker threads used by parallel_for. 1 = sequential (default).
void set_parallelism(int threads);
int parallelism();

/// Runs fn(i) for i in [0, n). Work is chunked across threads; each index is
/// processed exactly once and writes only to its own slot, so results are
/// identical to the sequential schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace pcluster
