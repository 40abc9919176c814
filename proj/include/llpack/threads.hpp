#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace llpack {

namespace detail {
inline std::atomic<int>& thread_limit() {
    static std::atomic<int> limit{0};  // 0 = no override
    return limit;
}
}  // namespace detail

// Worker cap: min(hardware threads, LLPACK_THREADS env), further capped by a
// live ThreadLimit guard (used by the bench harness to time ops serially).
inline int worker_count() {
    static const int cached = [] {
        int n = static_cast<int>(std::thread::hardware_concurrency());
        if (n < 1) n = 1;
        if (const char* env = std::getenv("LLPACK_THREADS")) {
            const int cap = std::atoi(env);
            if (cap >= 1) n = std::min(n, cap);
        }
        return n;
    }();
    const int limit = detail::thread_limit().load();
    return limit >= 1 ? std::min(cached, limit) : cached;
}

// RAII worker-count override; scopes must not overlap across threads.
struct ThreadLimit {
    int previous;
    explicit ThreadLimit(int n) : previous(detail::thread_limit().load()) {
        detail::thread_limit().store(n);
    }
    ~ThreadLimit() { detail::thread_limit().store(previous); }
};

namespace detail {
inline bool& in_parallel_region() {
    thread_local bool flag = false;
    return flag;
}
}  // namespace detail

// Splits [0, n) into contiguous chunks, one per worker. Callers must write
// disjoint outputs per index; chunk boundaries then cannot affect results,
// which keeps outputs bit-identical for any worker count. Never nests: a
// parallel_for issued from inside a worker runs serially.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    if (n <= 0) return;
    const int workers = detail::in_parallel_region() ? 1 : std::min<std::int64_t>(worker_count(), n);
    if (workers <= 1) {
        fn(std::int64_t{0}, n);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int w = 1; w < workers; ++w) {
        const std::int64_t begin = w * chunk;
        const std::int64_t end = std::min<std::int64_t>(begin + chunk, n);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] {
            detail::in_parallel_region() = true;
            fn(begin, end);
            detail::in_parallel_region() = false;
        });
    }
    detail::in_parallel_region() = true;
    fn(std::int64_t{0}, std::min<std::int64_t>(chunk, n));
    detail::in_parallel_region() = false;
    for (auto& t : pool) t.join();
}

}  // namespace llpack
