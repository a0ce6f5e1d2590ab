#include "qratchet/parallel.hpp"

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qratchet {

void parallel_for_workers(int n, int n_threads, const std::function<void(int, int)>& fn) {
    if (n <= 0) return;
    n_threads = std::max(1, std::min(n_threads, n));
    if (n_threads == 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (int w = 0; w < n_threads; ++w) {
        const int begin = static_cast<int>(static_cast<long long>(n) * w / n_threads);
        const int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / n_threads);
        workers.emplace_back([&, w, begin, end]() {
            try {
                for (int i = begin; i < end; ++i) fn(i, w);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
    parallel_for_workers(n, n_threads, [&fn](int i, int) { fn(i); });
}

}  // namespace qratchet
