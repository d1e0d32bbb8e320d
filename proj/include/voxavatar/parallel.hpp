#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace vxa {

/// Number of worker threads used by the data-parallel kernels. 0 selects
/// std::thread::hardware_concurrency(). Results never depend on this value:
/// work is split into a fixed number of chunks and reduced in chunk order.
int worker_count();
void set_worker_count(int n);

/// Runs body(chunk) for chunk in [0, n_chunks) on the worker pool. Chunks are
/// claimed dynamically; any exception is rethrown on the calling thread.
template <typename Body>
void parallel_chunks(int n_chunks, Body&& body) {
    const int workers = std::min(worker_count(), n_chunks);
    if (workers <= 1) {
        for (int c = 0; c < n_chunks; ++c) body(c);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (int c = next++; c < n_chunks; c = next++) {
            try {
                body(c);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    pool.clear();
    if (error) std::rethrow_exception(error);
}

/// Half-open row range of chunk `c` when `rows` are split into `n_chunks` bands.
inline std::pair<int, int> band_range(int rows, int n_chunks, int c) {
    const int base = rows / n_chunks, extra = rows % n_chunks;
    const int begin = c * base + std::min(c, extra);
    return {begin, begin + base + (c < extra ? 1 : 0)};
}

}  // namespace vxa
