#include "epd/latency.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include <boost/math/distributions/students_t.hpp>

namespace epd {

MeanCi mean_ci95(std::span<const double> samples) {
  if (samples.size() < 2) throw InvalidArgument("mean_ci95: at least two samples required");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
  return {mean, q * sd / std::sqrt(n)};
}

const LatencyRow& LatencyReport::at(std::size_t K, std::size_t workers) const {
  for (const auto& r : rows)
    if (r.K == K && r.workers == workers) return r;
  throw InvalidArgument("latency report: no row for K=" + std::to_string(K) + ", workers=" + std::to_string(workers));
}

LatencyReport bench_step_latency(const NoiseOracle& oracle, std::span<const std::size_t> k_values,
                                 std::span<const std::size_t> worker_counts, const BenchOptions& options) {
  if (options.reps < 2) throw InvalidArgument("bench: at least two repetitions required");
  using clock = std::chrono::steady_clock;
  const double t_cur = 1.0;
  const double t_next = 0.5;
  const Vec x(oracle.dim(), 0.25);
  const Vec d0 = oracle.noise_prediction(x, t_cur);

  LatencyReport report;
  for (std::size_t workers : worker_counts) {
    Executor executor(workers);
    for (std::size_t K : k_values) {
      const EpdParams p = initial_params(K, 1);
      const auto branches = derive_step_params(p.steps[0], p.bounds, t_cur, t_next);
      const Direction over = options.include_start_eval ? Direction{} : Direction(d0);
      Vec samples;
      for (std::size_t rep = 0; rep < options.warmup + options.reps; ++rep) {
        const auto t0 = clock::now();
        const Vec out = epd_step(oracle, executor, x, t_cur, t_next, branches, over);
        const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        if (out.size() != x.size()) throw std::logic_error("bench: bad step output");
        if (rep >= options.warmup) samples.push_back(ms);
      }
      const MeanCi ci = mean_ci95(samples);
      report.rows.push_back({K, workers, ci.mean, ci.half_width, options.reps});
    }
  }
  return report;
}

void write_latency_csv(std::ostream& out, const LatencyReport& report) {
  out << "K,workers,mean_ms,ci95_ms,reps\n";
  char buf[128];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.4f,%.4f,%zu\n", r.K, r.workers, r.mean_ms, r.ci95_ms, r.reps);
    out << buf;
  }
}

}  // namespace epd
