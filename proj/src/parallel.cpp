#include "gradreg/parallel.h"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace gradreg {

namespace {

int read_thread_count() {
    if (const char* env = std::getenv("GRADREG_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1)
            return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

thread_local bool in_worker = false;

// Persistent pool so per-kernel launch overhead stays negligible for the
// many small kernels a registration iteration issues.
class Pool {
public:
    Pool(int workers) : stop_(false), job_id_(0), pending_(0) {
        for (int i = 0; i < workers; ++i)
            threads_.emplace_back([this] { worker_loop(); });
    }

    ~Pool() {
        {
            std::unique_lock<std::mutex> lock(mutex_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_)
            t.join();
    }

    void run(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
        std::int64_t chunk = (n - 1) / (std::int64_t(threads_.size() + 1) * 4) + 1;
        next_.store(0, std::memory_order_relaxed);
        {
            std::unique_lock<std::mutex> lock(mutex_);
            job_n_ = n;
            job_chunk_ = chunk;
            job_fn_ = &fn;
            pending_ = int(threads_.size());
            ++job_id_;
        }
        cv_.notify_all();
        drain(n, chunk, fn);
        std::unique_lock<std::mutex> lock(mutex_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        job_fn_ = nullptr;
    }

private:
    void drain(std::int64_t n, std::int64_t chunk, const std::function<void(std::int64_t)>& fn) {
        for (;;) {
            std::int64_t begin = next_.fetch_add(chunk, std::memory_order_relaxed);
            if (begin >= n)
                break;
            std::int64_t end = begin + chunk < n ? begin + chunk : n;
            for (std::int64_t i = begin; i < end; ++i)
                fn(i);
        }
    }

    void worker_loop() {
        in_worker = true;
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::int64_t)>* fn;
            std::int64_t n, chunk;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_.wait(lock, [&] { return stop_ || job_id_ != seen; });
                if (stop_)
                    return;
                seen = job_id_;
                fn = job_fn_;
                n = job_n_;
                chunk = job_chunk_;
            }
            drain(n, chunk, *fn);
            {
                std::unique_lock<std::mutex> lock(mutex_);
                if (--pending_ == 0)
                    done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    bool stop_;
    std::uint64_t job_id_;
    int pending_;
    std::int64_t job_n_ = 0;
    std::int64_t job_chunk_ = 0;
    const std::function<void(std::int64_t)>* job_fn_ = nullptr;
    std::atomic<std::int64_t> next_{0};
};

Pool* pool() {
    static Pool instance(thread_count() - 1);
    return &instance;
}

}  // namespace

int thread_count() {
    static int n = read_thread_count();
    return n;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    if (n <= 0)
        return;
    // Serial when single-threaded, when already inside a worker (no nested
    // parallelism), or for small jobs where pool wake-up latency would
    // dominate the work. Results never depend on the serial/parallel choice:
    // work items write disjoint outputs and reductions use fixed chunking.
    if (thread_count() == 1 || n < 128 || in_worker) {
        for (std::int64_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    pool()->run(n, fn);
}

double pairwise_sum(const double* v, std::size_t n) {
    if (n == 0)
        return 0.0;
    if (n <= 8) {
        double s = v[0];
        for (std::size_t i = 1; i < n; ++i)
            s += v[i];
        return s;
    }
    std::size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

}  // namespace gradreg
