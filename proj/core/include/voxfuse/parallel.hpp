#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace voxfuse {

// 0 -> hardware concurrency, clamped to [1, 256].
int resolve_thread_count(int requested);

// Runs fn(i) for i in [0, n_items) on up to `threads` workers. Work items are
// claimed from a shared counter; the first exception wins and is rethrown on
// the calling thread after all workers finish.
void parallel_for(std::int64_t n_items, int threads,
                  const std::function<void(std::int64_t)>& fn);

// Splits [0, extent) into consecutive half-open ranges of at most chunk_size.
std::vector<std::pair<std::int64_t, std::int64_t>> split_ranges(std::int64_t extent,
                                                                std::int64_t chunk_size);

} // namespace voxfuse
