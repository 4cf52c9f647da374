#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace fsel {

/// Fixed set of worker threads that execute indexed task batches.
///
/// run(n, fn) calls fn(i) exactly once for each i in [0, n) and returns when
/// all calls have finished; the calling thread works too. Which thread runs
/// which index is unspecified, so fn must write only to index-owned state.
/// The first exception thrown by any task is rethrown from run().
class WorkerPool {
public:
    explicit WorkerPool(std::size_t threads) {
        const std::size_t extra = threads > 1 ? threads - 1 : 0;
        workers_.reserve(extra);
        for (std::size_t i = 0; i < extra; ++i) workers_.emplace_back([this] { worker_loop(); });
    }

    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    ~WorkerPool() {
        {
            std::lock_guard lock(mu_);
            stop_ = true;
        }
        wake_.notify_all();
        for (auto& t : workers_) t.join();
    }

    std::size_t threads() const noexcept { return workers_.size() + 1; }

    void run(std::size_t n, const std::function<void(std::size_t)>& fn) {
        if (n == 0) return;
        if (workers_.empty() || n == 1) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        {
            std::lock_guard lock(mu_);
            task_ = &fn;
            total_ = n;
            next_.store(0);
            active_ = workers_.size();
            error_ = nullptr;
            ++generation_;
        }
        wake_.notify_all();
        drain();
        std::unique_lock lock(mu_);
        done_.wait(lock, [this] { return active_ == 0; });
        task_ = nullptr;
        if (error_) std::rethrow_exception(error_);
    }

private:
    void drain() {
        for (;;) {
            const std::size_t i = next_.fetch_add(1);
            if (i >= total_) return;
            try {
                (*task_)(i);
            } catch (...) {
                std::lock_guard lock(mu_);
                if (!error_) error_ = std::current_exception();
                next_.store(total_);
            }
        }
    }

    void worker_loop() {
        std::size_t seen = 0;
        for (;;) {
            {
                std::unique_lock lock(mu_);
                wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
            }
            drain();
            {
                std::lock_guard lock(mu_);
                if (--active_ == 0) done_.notify_one();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t)>* task_ = nullptr;
    std::size_t total_ = 0;
    std::atomic<std::size_t> next_{0};
    std::size_t active_ = 0;
    std::size_t generation_ = 0;
    std::exception_ptr error_;
    bool stop_ = false;
};

/// Hardware concurrency with a floor of one.
inline std::size_t default_thread_count() {
    const auto n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

}  // namespace fsel
