#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace morse {

/// Runs fn(task) for task in [0, tasks) on up to `threads` workers. Callers write results by task
/// index, so the outcome is independent of the worker count. The first exception is rethrown.
template <typename Fn>
void parallel_for(long tasks, int threads, Fn&& fn) {
    const int workers = static_cast<int>(std::clamp<long>(threads, 1, std::max<long>(tasks, 1)));
    if (workers == 1) {
        for (long t = 0; t < tasks; ++t) fn(t);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (long t = next++; t < tasks; t = next++) {
            try {
                fn(t);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = tasks;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

/// --threads, then MORSE_THREADS, then 1.
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MORSE_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

}  // namespace morse
