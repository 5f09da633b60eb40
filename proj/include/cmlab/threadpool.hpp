// Deterministic fork-join worker pool.
//
// parallel_for splits a range into contiguous chunks; every caller that wants
// reproducible results must make each chunk write disjoint outputs with a
// fixed per-element reduction order, so values are independent of the thread
// count. All users in this codebase follow that contract.

#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace cmlab {

class ThreadPool {
 public:
  explicit ThreadPool(int threads = 1) { start(threads); }
  ~ThreadPool() { stop(); }
  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  // threads <= 0 means hardware concurrency
  void resize(int threads) {
    stop();
    start(threads);
  }

  int size() const { return n_threads_; }

  // Runs fn(begin, end) over contiguous chunks of [0, total); blocks until all
  // chunks are done. Chunk boundaries are a pure function of (total, size())
  // and the caller thread participates, so a pool of size 1 is a plain loop.
  void parallel_for(int64_t total, const std::function<void(int64_t, int64_t)>& fn) {
    if (total <= 0) return;
    const int chunks = static_cast<int>(std::min<int64_t>(n_threads_, total));
    if (chunks <= 1) {
      fn(0, total);
      return;
    }
    std::vector<std::pair<int64_t, int64_t>> ranges;
    ranges.reserve(chunks);
    const int64_t base = total / chunks, extra = total % chunks;
    int64_t at = 0;
    for (int i = 0; i < chunks; ++i) {
      const int64_t len = base + (i < extra ? 1 : 0);
      ranges.emplace_back(at, at + len);
      at += len;
    }
    const int n_tasks = chunks - 1;  // chunk 0 runs on the caller
    auto run_one = [&](int idx) {
      try {
        fn(ranges[idx + 1].first, ranges[idx + 1].second);
      } catch (...) {
        std::lock_guard g(err_mu_);
        if (!err_) err_ = std::current_exception();
      }
    };
    {
      std::lock_guard lk(mu_);
      task_ = run_one;
      n_tasks_ = n_tasks;
      next_ = 0;
      remaining_ = n_tasks;
      ++generation_;
    }
    cv_.notify_all();
    try {
      fn(ranges[0].first, ranges[0].second);
    } catch (...) {
      std::lock_guard g(err_mu_);
      if (!err_) err_ = std::current_exception();
    }
    std::exception_ptr err;
    {
      std::unique_lock lk(mu_);
      done_cv_.wait(lk, [this] { return remaining_ == 0; });
      task_ = nullptr;
    }
    {
      std::lock_guard g(err_mu_);
      err = err_;
      err_ = nullptr;
    }
    if (err) std::rethrow_exception(err);
  }

  // Process-wide pool used by the engine; sized once by the CLI (--threads).
  static ThreadPool& global() {
    static ThreadPool pool(1);
    return pool;
  }

 private:
  void start(int threads) {
    int n = threads > 0 ? threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    n_threads_ = n;
    stopping_ = false;
    for (int i = 1; i < n; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  void worker_loop() {
    uint64_t seen = 0;
    while (true) {
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
      }
      while (true) {
        int idx;
        std::function<void(int)> task;
        {
          std::lock_guard lk(mu_);
          if (!task_ || next_ >= n_tasks_) break;
          idx = next_++;
          task = task_;
        }
        task(idx);
        {
          std::lock_guard lk(mu_);
          if (--remaining_ == 0) done_cv_.notify_all();
        }
      }
    }
  }

  void stop() {
    {
      std::lock_guard lk(mu_);
      stopping_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

  std::vector<std::thread> workers_;
  std::mutex mu_, err_mu_;
  std::condition_variable cv_, done_cv_;
  std::function<void(int)> task_;
  std::exception_ptr err_;
  int n_threads_ = 1;
  int n_tasks_ = 0;
  int next_ = 0;
  int remaining_ = 0;
  uint64_t generation_ = 0;
  bool stopping_ = false;
};

}  // namespace cmlab
