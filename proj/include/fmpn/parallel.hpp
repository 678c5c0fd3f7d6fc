#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fmpn {

/// Worker count: FMPN_NUM_WORKERS if set (clamped to >= 1), else the
/// hardware concurrency.
inline unsigned worker_count() {
    static unsigned cached = [] {
        if (const char* env = std::getenv("FMPN_NUM_WORKERS")) {
            long v = std::strtol(env, nullptr, 10);
            if (v >= 1) return static_cast<unsigned>(v);
            return 1u;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1u : hw;
    }();
    return cached;
}

namespace detail {

inline bool& in_worker_flag() {
    thread_local bool flag = false;
    return flag;
}

/// Minimal persistent pool. Work items own disjoint output memory, so
/// dynamic index assignment cannot change numeric results.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool(worker_count());
        return pool;
    }

    void run(std::size_t n, const std::function<void(std::size_t)>& fn) {
        std::unique_lock<std::mutex> lock(mutex_);
        job_fn_ = &fn;
        job_n_ = n;
        next_index_.store(0, std::memory_order_relaxed);
        pending_ = static_cast<int>(threads_.size());
        ++generation_;
        cv_start_.notify_all();
        // The caller participates instead of idling.
        lock.unlock();
        work(fn, n);
        lock.lock();
        cv_done_.wait(lock, [this] { return pending_ == 0; });
        job_fn_ = nullptr;
    }

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            stop_ = true;
            ++generation_;
        }
        cv_start_.notify_all();
        for (auto& t : threads_) t.join();
    }

private:
    explicit ThreadPool(unsigned workers) {
        unsigned extra = workers > 1 ? workers - 1 : 0;
        for (unsigned i = 0; i < extra; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    void worker_loop() {
        in_worker_flag() = true;
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t)>* fn = nullptr;
            std::size_t n = 0;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_start_.wait(lock, [&] { return stop_ || generation_ != seen; });
                seen = generation_;
                if (stop_) return;
                fn = job_fn_;
                n = job_n_;
            }
            if (fn) work(*fn, n);
            {
                std::lock_guard<std::mutex> lock(mutex_);
                if (--pending_ == 0) cv_done_.notify_all();
            }
        }
    }

    void work(const std::function<void(std::size_t)>& fn, std::size_t n) {
        for (;;) {
            std::size_t i = next_index_.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) break;
            fn(i);
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable cv_start_;
    std::condition_variable cv_done_;
    const std::function<void(std::size_t)>* job_fn_ = nullptr;
    std::size_t job_n_ = 0;
    std::atomic<std::size_t> next_index_{0};
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

} // namespace detail

/// Runs fn(i) for i in [0, n). Indices must write disjoint memory; with that
/// contract results are bit-identical for any worker count. Nested calls
/// degrade to serial execution.
template <typename Fn>
inline void parallel_for(std::size_t n, Fn&& fn) {
    if (n == 0) return;
    if (n == 1 || worker_count() == 1 || detail::in_worker_flag()) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::function<void(std::size_t)> wrapped = std::forward<Fn>(fn);
    detail::ThreadPool::instance().run(n, wrapped);
}

} // namespace fmpn
