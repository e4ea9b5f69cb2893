#include "tetrec/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>

namespace tetrec {

namespace {
std::atomic<int> g_thread_count{0};

int effective_threads() {
    int n = g_thread_count.load();
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}
} // namespace

void set_thread_count(int n) { g_thread_count.store(n); }
int thread_count() { return effective_threads(); }

int parallel_chunk_count(int64_t n) {
    return static_cast<int>(std::min<int64_t>(effective_threads(), std::max<int64_t>(1, n)));
}

void parallel_for_chunks(int64_t n, const std::function<void(int64_t, int64_t, int)>& fn) {
    if (n <= 0) return;
    const int chunks = parallel_chunk_count(n);
    if (chunks == 1) {
        fn(0, n, 0);
        return;
    }
    const int64_t per = (n + chunks - 1) / chunks;
    std::vector<std::thread> pool;
    pool.reserve(chunks - 1);
    std::exception_ptr error;
    std::mutex error_mutex;

    auto run = [&](int c) {
        const int64_t begin = c * per;
        const int64_t end = std::min<int64_t>(n, begin + per);
        if (begin >= end) return;
        try {
            fn(begin, end, c);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    };

    for (int c = 1; c < chunks; ++c) pool.emplace_back(run, c);
    run(0);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    parallel_for_chunks(n, [&](int64_t begin, int64_t end, int) {
        for (int64_t i = begin; i < end; ++i) fn(i);
    });
}

double parallel_sum(int64_t n, const std::function<double(int64_t)>& fn) {
    if (n <= 0) return 0.0;
    const int chunks = parallel_chunk_count(n);
    std::vector<double> partial(chunks, 0.0);
    parallel_for_chunks(n, [&](int64_t begin, int64_t end, int c) {
        double acc = 0.0;
        for (int64_t i = begin; i < end; ++i) acc += fn(i);
        partial[c] = acc;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

} // namespace tetrec
