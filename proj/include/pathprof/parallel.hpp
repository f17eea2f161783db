#pragma once

#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace pathprof {

inline int resolve_jobs(int jobs) {
    if (jobs > 0) {
        return jobs;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) across `jobs` threads (0 = machine parallelism).
// Work is split into contiguous chunks; fn must only write to per-index slots,
// so results are identical regardless of the job count. The first exception
// thrown by any worker is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::int64_t n, int jobs, Fn&& fn) {
    jobs = resolve_jobs(jobs);
    if (n <= 0) {
        return;
    }
    if (jobs == 1 || n == 1) {
        for (std::int64_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    const int workers = static_cast<int>(std::min<std::int64_t>(jobs, n));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        threads.emplace_back([&, t]() {
            const std::int64_t lo = n * t / workers;
            const std::int64_t hi = n * (t + 1) / workers;
            try {
                for (std::int64_t i = lo; i < hi; ++i) {
                    fn(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : threads) {
        th.join();
    }
    for (auto& err : errors) {
        if (err) {
            std::rethrow_exception(err);
        }
    }
}

}  // namespace pathprof
