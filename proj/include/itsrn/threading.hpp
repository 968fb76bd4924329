#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace itsrn {

// Global worker cap, settable from the CLI (--threads). Kernels split work
// into disjoint output ranges, so results are bit-identical for any count.
inline std::atomic<int>& thread_count_slot() {
    static std::atomic<int> n{0};  // 0 = use hardware concurrency
    return n;
}

inline void set_thread_count(int n) { thread_count_slot().store(n > 0 ? n : 0); }

inline int thread_count() {
    int n = thread_count_slot().load();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(begin, end) over a static partition of [0, n). Falls back to the
// calling thread for small n so tiny kernels do not pay spawn cost.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn, std::int64_t grain = 1024) {
    if (n <= 0) return;
    int workers = thread_count();
    if (workers <= 1 || n < 2 * grain) {
        fn(std::int64_t{0}, n);
        return;
    }
    workers = static_cast<int>(std::min<std::int64_t>(workers, (n + grain - 1) / grain));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    std::int64_t chunk = (n + workers - 1) / workers;
    for (int t = 1; t < workers; ++t) {
        std::int64_t b = t * chunk;
        std::int64_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(std::int64_t{0}, std::min(n, chunk));
    for (auto& th : pool) th.join();
}

}  // namespace itsrn
