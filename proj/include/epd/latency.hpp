#pragma once

#include <ostream>

#include "epd/epd_solver.hpp"

namespace epd {

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // 95% Student-t
};

/// Mean and 95% confidence half-width of i.i.d. samples; needs >= 2 samples.
MeanCi mean_ci95(std::span<const double> samples);

struct LatencyRow {
  std::size_t K = 1;
  std::size_t workers = 1;
  double mean_ms = 0.0;
  double ci95_ms = 0.0;
  std::size_t reps = 0;
};

struct LatencyReport {
  std::vector<LatencyRow> rows;

  const LatencyRow& at(std::size_t K, std::size_t workers) const;
};

struct BenchOptions {
  std::size_t reps = 10;
  std::size_t warmup = 3;
  // Time the shared start-point evaluation too. Off by default: it is one
  // sequential call whatever K is, so only the branch fan-out is measured.
  bool include_start_eval = false;
};

/// Wall time of one epd_step per (K, workers) pair.
LatencyReport bench_step_latency(const NoiseOracle& oracle, std::span<const std::size_t> k_values,
                                 std::span<const std::size_t> worker_counts, const BenchOptions& options = {});

/// K,workers,mean_ms,ci95_ms,reps
void write_latency_csv(std::ostream& out, const LatencyReport& report);

}  // namespace epd
