#include "tbeam/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tbeam {

int worker_count() {
    static const int count = [] {
        if (const char* env = std::getenv("TBEAM_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) {
                return std::min(v, 256);
            }
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return count;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
    const int workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::mutex error_mutex;
    std::exception_ptr first_error;
    const auto run = [&](int w) {
        try {
            for (int i = w; i < n; i += workers) {
                fn(i);
            }
        } catch (...) {
            const std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) {
                first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) {
        threads.emplace_back(run, w);
    }
    run(0);
    for (auto& t : threads) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

}  // namespace tbeam
