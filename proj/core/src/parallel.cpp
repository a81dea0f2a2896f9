#include "voxfuse/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace voxfuse {

int resolve_thread_count(int requested) {
    if (requested > 0) return std::min(requested, 256);
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 256u));
}

void parallel_for(std::int64_t n_items, int threads,
                  const std::function<void(std::int64_t)>& fn) {
    if (n_items <= 0) return;
    const int workers = std::min<std::int64_t>(resolve_thread_count(threads), n_items);
    if (workers <= 1) {
        for (std::int64_t i = 0; i < n_items; ++i) fn(i);
        return;
    }

    std::atomic<std::int64_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const std::int64_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n_items) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n_items, std::memory_order_relaxed); // stop claiming work
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (first_error) std::rethrow_exception(first_error);
}

std::vector<std::pair<std::int64_t, std::int64_t>> split_ranges(std::int64_t extent,
                                                                std::int64_t chunk_size) {
    std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
    if (extent <= 0) return ranges;
    chunk_size = std::max<std::int64_t>(chunk_size, 1);
    for (std::int64_t lo = 0; lo < extent; lo += chunk_size)
        ranges.emplace_back(lo, std::min(lo + chunk_size, extent));
    return ranges;
}

} // namespace voxfuse
