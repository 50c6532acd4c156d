#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace trapkit {

// Runs fn(i) for i in [0, count) on up to `workers` threads. fn must not throw.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
    const auto threads_wanted = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), count);
    if (threads_wanted <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            fn(i);
        }
    };
    std::vector<std::jthread> threads;
    threads.reserve(threads_wanted);
    for (std::size_t t = 0; t < threads_wanted; ++t) {
        threads.emplace_back(body);
    }
}

}  // namespace trapkit
