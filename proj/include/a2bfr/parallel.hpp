#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace a2bfr {

// Process-wide worker bound (CLI --workers). Parallel regions only ever write
// disjoint outputs, so results do not depend on the worker count.
inline int& worker_count() {
  static int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return workers;
}

inline void set_workers(int n) { worker_count() = n < 1 ? 1 : n; }

namespace detail {

// Set while a thread is executing tasks of a parallel region; nested
// parallel_for calls then run inline instead of re-entering the pool.
inline bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}

class ThreadPool {
 public:
  explicit ThreadPool(int threads) {
    for (int i = 0; i < threads; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  // Runs fn(i) for i in [0, n) across the pool plus the calling thread.
  void run(int64_t n, const std::function<void(int64_t)>& fn) {
    std::unique_lock<std::mutex> lock(mu_);
    task_ = &fn;
    next_.store(0, std::memory_order_relaxed);
    total_ = n;
    active_ = static_cast<int>(threads_.size());
    ++generation_;
    cv_.notify_all();
    lock.unlock();

    drain(fn);

    lock.lock();
    done_cv_.wait(lock, [this] { return active_ == 0; });
    task_ = nullptr;
  }

 private:
  void drain(const std::function<void(int64_t)>& fn) {
    in_parallel_region() = true;
    int64_t i;
    while ((i = next_.fetch_add(1, std::memory_order_relaxed)) < total_) fn(i);
    in_parallel_region() = false;
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(int64_t)>* task = nullptr;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        task = task_;
      }
      if (task) drain(*task);
      {
        std::unique_lock<std::mutex> lock(mu_);
        if (--active_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(int64_t)>* task_ = nullptr;
  std::atomic<int64_t> next_{0};
  int64_t total_ = 0;
  int active_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

inline ThreadPool& shared_pool() {
  static ThreadPool pool(std::max(0, worker_count() - 1));
  return pool;
}

}  // namespace detail

// fn(i) must write only outputs owned by index i.
inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  if (worker_count() <= 1 || n == 1 || detail::in_parallel_region()) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  detail::shared_pool().run(n, fn);
}

}  // namespace a2bfr
