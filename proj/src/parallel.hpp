#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace mtdrive {

// Runs fn(i) for i in [0, n). Work items must write only to their own slots;
// results are then independent of scheduling and of the job count.
template <typename Fn>
void parallel_for(int jobs, std::size_t n, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            fn(i);
        }
    };
    std::vector<std::thread> threads;
    const std::size_t thread_count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    threads.reserve(thread_count - 1);
    for (std::size_t t = 1; t < thread_count; ++t) {
        threads.emplace_back(worker);
    }
    worker();
    for (std::thread& t : threads) {
        t.join();
    }
}

}  // namespace mtdrive
