#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace hjb {

/// Worker count from HJB_THREADS (0 or unset = hardware concurrency).
inline unsigned worker_count() {
    unsigned n = 0;
    if (const char* env = std::getenv("HJB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) n = static_cast<unsigned>(v);
    }
    if (n == 0) {
        static const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        n = hw;
    }
    return n;
}

/// Calls fn(begin, end) on disjoint chunks of [0, n). Each index is handled by
/// exactly one call, so results written per index do not depend on the worker count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t min_parallel = 4096) {
    const unsigned workers = worker_count();
    if (workers <= 1 || n < min_parallel) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunks = std::min<std::size_t>(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(chunks - 1);
    for (std::size_t c = 1; c < chunks; ++c)
        pool.emplace_back([&, c] { fn(n * c / chunks, n * (c + 1) / chunks); });
    fn(0, n / chunks);
    for (auto& t : pool) t.join();
}

}  // namespace hjb
