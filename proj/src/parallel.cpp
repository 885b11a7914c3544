#include "prunekit/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace prunekit {

namespace {

std::atomic<std::size_t> g_override{0};

std::size_t env_workers() {
    const char* raw = std::getenv("PRUNEKIT_THREADS");
    if (raw != nullptr && *raw != '\0') {
        try {
            const long v = std::stol(raw);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

}  // namespace

std::size_t worker_count() {
    const std::size_t o = g_override.load();
    return o > 0 ? o : env_workers();
}

void set_worker_count(std::size_t n) { g_override.store(n); }

void parallel_for(std::size_t tasks, const std::function<void(std::size_t, std::size_t)>& body) {
    const std::size_t workers = std::min(worker_count(), tasks);
    if (workers <= 1) {
        for (std::size_t t = 0; t < tasks; ++t) body(t, 0);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t begin = tasks * w / workers;
            const std::size_t end = tasks * (w + 1) / workers;
            try {
                for (std::size_t t = begin; t < end; ++t) body(t, w);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace prunekit
