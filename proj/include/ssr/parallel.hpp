#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ssr {

// Runs fn(0..n-1) across up to n_workers threads. Tasks must write results
// into index-addressed slots so the outcome is identical at any worker count;
// the first exception thrown by a task is rethrown after all workers join.
template <class Fn>
inline void parallel_for(std::size_t n, int n_workers, Fn&& fn) {
    if (n == 0) return;
    if (n_workers <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t pool = std::min<std::size_t>(static_cast<std::size_t>(n_workers), n);
    std::atomic<std::size_t> counter{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&]() {
        while (true) {
            std::size_t i = counter.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(work);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace ssr
