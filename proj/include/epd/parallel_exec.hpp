#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "epd/score_oracle.hpp"

namespace epd {

/// A failure inside one fan-out task, tagged with its index.
class BranchError : public std::runtime_error {
 public:
  BranchError(std::size_t branch, const std::string& what)
      : std::runtime_error("branch " + std::to_string(branch) + ": " + what), branch_(branch) {}
  std::size_t branch() const { return branch_; }

 private:
  std::size_t branch_;
};

/// Fixed-size fan-out/fan-in pool. `workers` counts the calling thread, so
/// Executor(1) runs everything inline and Executor(W) spawns W - 1 threads.
///
/// Each index writes only its own result slot, so outputs do not depend on
/// the worker count or on scheduling. Calls made from inside a running task
/// execute inline.
class Executor {
 public:
  explicit Executor(std::size_t workers = 1);
  ~Executor();
  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  std::size_t workers() const { return workers_; }

  /// Runs fn(0..n-1), blocking until all finish. If any task throws, the
  /// error with the lowest index is rethrown as a BranchError.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

  /// Shared single-worker executor.
  static Executor& inline_executor();

 private:
  struct Job;
  void worker_loop();
  void drain(Job& job);

  std::size_t workers_;
  std::vector<std::thread> threads_;
  std::mutex submit_mu_;  // one job at a time
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  Job* job_ = nullptr;
  std::size_t generation_ = 0;
  bool stop_ = false;
};

struct EvalRequest {
  Vec state;
  double time = 0.0;
  std::size_t branch = 0;
};

/// Evaluates every request, results in request order; bitwise identical to a
/// sequential loop for any worker count.
std::vector<Vec> par_map_eval(Executor& executor, const NoiseOracle& oracle,
                              std::span<const EvalRequest> requests);

}  // namespace epd
