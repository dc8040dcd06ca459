#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace distcap {

using ImageId = std::int64_t;

// Input could not be decoded at all (bad JSON, bad TSV row, ...).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input decoded but violates a precondition or invariant.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Static block partition of [0, n). fn(begin, end) runs on worker threads;
// results must be written to disjoint, pre-sized storage so the outcome is
// independent of the thread count.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
    if (threads < 1) threads = 1;
    if (threads == 1 || n < 2) {
        fn(0, n);
        return;
    }
    std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    std::size_t chunk = (n + nthreads - 1) / nthreads;
    for (std::size_t t = 0; t < nthreads; ++t) {
        std::size_t begin = t * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace distcap
