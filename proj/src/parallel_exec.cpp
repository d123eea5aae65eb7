#include "epd/parallel_exec.hpp"

#include <atomic>
#include <exception>

namespace epd {

namespace {
thread_local bool t_in_task = false;

struct TaskScope {
  bool prev;
  TaskScope() : prev(t_in_task) { t_in_task = true; }
  ~TaskScope() { t_in_task = prev; }
};
}  // namespace

struct Executor::Job {
  const std::function<void(std::size_t)>* fn = nullptr;
  std::size_t n = 0;
  std::atomic<std::size_t> next{0};
  std::size_t active = 0;  // guarded by Executor::mu_
  std::vector<std::exception_ptr> errors;
};

Executor::Executor(std::size_t workers) : workers_(workers) {
  if (workers_ == 0) throw InvalidArgument("executor: at least one worker required");
  threads_.reserve(workers_ - 1);
  for (std::size_t i = 1; i < workers_; ++i) threads_.emplace_back([this] { worker_loop(); });
}

Executor::~Executor() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

Executor& Executor::inline_executor() {
  static Executor single(1);
  return single;
}

void Executor::drain(Job& job) {
  TaskScope scope;
  for (;;) {
    const std::size_t i = job.next.fetch_add(1, std::memory_order_relaxed);
    if (i >= job.n) break;
    try {
      (*job.fn)(i);
    } catch (...) {
      job.errors[i] = std::current_exception();
    }
  }
}

void Executor::worker_loop() {
  std::size_t seen = 0;
  for (;;) {
    Job* job = nullptr;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || (job_ != nullptr && generation_ != seen); });
      if (stop_) return;
      seen = generation_;
      job = job_;
      ++job->active;
    }
    drain(*job);
    {
      std::lock_guard lock(mu_);
      --job->active;
    }
    done_cv_.notify_all();
  }
}

void Executor::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  Job job;
  job.fn = &fn;
  job.n = n;
  job.errors.resize(n);

  if (workers_ == 1 || n == 1 || t_in_task) {
    drain(job);
  } else {
    std::lock_guard submit(submit_mu_);
    {
      std::lock_guard lock(mu_);
      job_ = &job;
      ++generation_;
    }
    cv_.notify_all();
    drain(job);
    std::unique_lock lock(mu_);
    job_ = nullptr;
    done_cv_.wait(lock, [&] { return job.active == 0; });
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!job.errors[i]) continue;
    try {
      std::rethrow_exception(job.errors[i]);
    } catch (const BranchError&) {
      throw;
    } catch (const std::exception& e) {
      throw BranchError(i, e.what());
    } catch (...) {
      throw BranchError(i, "unknown failure");
    }
  }
}

std::vector<Vec> par_map_eval(Executor& executor, const NoiseOracle& oracle,
                              std::span<const EvalRequest> requests) {
  std::vector<Vec> results(requests.size());
  executor.parallel_for(requests.size(), [&](std::size_t i) {
    const auto& r = requests[i];
    try {
      results[i] = oracle.noise_prediction(r.state, r.time);
    } catch (const std::exception& e) {
      throw BranchError(r.branch, e.what());
    }
  });
  return results;
}

}  // namespace epd
