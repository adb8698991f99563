#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace steerlab {

/// Worker cap from STEERLAB_THREADS; defaults to 1 when unset or unparsable.
inline std::size_t evaluation_threads() {
    const char* env = std::getenv("STEERLAB_THREADS");
    if (env == nullptr) return 1;
    try {
        const long v = std::stol(env);
        return v >= 1 ? static_cast<std::size_t>(v) : 1;
    } catch (...) {
        return 1;
    }
}

/// out[i] = fn(i) for i in [0, n). Work is handed out by an atomic counter;
/// results land at their own index so the caller's fold order is fixed.
/// The first exception thrown by any worker is rethrown.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, std::size_t threads, Fn&& fn) {
    std::vector<T> out(n);
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 0; t + 1 < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return out;
}

}  // namespace steerlab
