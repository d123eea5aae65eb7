#pragma once

#include <filesystem>
#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "epd/distill.hpp"
#include "epd/latency.hpp"

namespace epd {

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::polynomial;
  double t_min = kDefaultTMin;
  double t_max = kDefaultTMax;
  double rho = kDefaultRho;

  TimeSchedule build(std::size_t steps) const { return build_schedule(kind, steps, t_min, t_max, rho); }
};

struct LatencyConfig {
  bool enabled = false;
  std::int64_t cost_ns = 10'000'000;
  CostMode mode = CostMode::busy;
  std::vector<std::size_t> k_values{1, 2, 3};
  std::vector<std::size_t> workers{1, 3};
  BenchOptions options;
};

struct ExperimentConfig {
  std::shared_ptr<const GaussianMixture> model = std::make_shared<GaussianMixture>(default_gmm());
  ScheduleSpec schedule;
  std::map<SolverKind, ScheduleSpec> solver_schedules;  // per-solver overrides
  std::vector<SolverKind> solvers{SolverKind::ddim, SolverKind::heun, SolverKind::dpm2, SolverKind::ipndm,
                                  SolverKind::epd};
  std::vector<std::size_t> k_values{2};
  std::vector<std::size_t> budgets{3, 5, 7, 9};
  bool afs = true;
  AfsVariant afs_variant = AfsVariant::scaled;
  std::vector<std::uint64_t> seeds;
  TrainConfig train;
  SolverKind reference_solver = SolverKind::heun;
  std::size_t reference_steps = 1024;
  std::size_t trajectory_exports = 4;  // seeds per row written as trajectory CSVs
  std::filesystem::path output_dir = "out";
  std::size_t workers = 1;
  LatencyConfig latency;
  std::optional<std::filesystem::path> params_path;  // for `sample`
  std::vector<std::filesystem::path> fixtures;        // for `validate-params`

  const ScheduleSpec& schedule_for(SolverKind kind) const;
};

/// `base_dir` resolves relative paths inside the document.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Seeds as {"base": b, "count": n} expand to b, b+1, ..., b+n-1.
std::vector<std::uint64_t> parse_seeds(const nlohmann::json& j);

/// Initial noise for one evaluation seed.
Vec seed_noise(std::uint64_t seed, double t_max, std::size_t dim);

/// Step count that spends exactly `para_nfe` sequential evaluations, if any.
/// One-eval solvers: N = budget + [afs]. Two-eval solvers: N = (budget + [afs]) / 2.
std::optional<std::size_t> resolve_steps(SolverKind kind, std::size_t para_nfe, bool afs);

struct MetricsRow {
  std::string solver;
  std::size_t K = 0;
  std::size_t para_nfe = 0;
  std::size_t nfe = 0;
  std::size_t steps = 0;
  std::size_t seeds = 0;
  double mean_endpoint_error = 0.0;
  Vec node_errors;  // visitation order, t_N first
  std::string status = "ok";
};

/// Endpoint error = mean over seeds of ||x_{t_0} - x^ref_{t_0}||_2; node
/// errors likewise at every trajectory node, which must all appear in the
/// reference trajectories.
MetricsRow compute_trajectory_metrics(std::span<const Trajectory> trajectories,
                                      std::span<const Trajectory> references);

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

/// Fine reference run on a refinement of `student` with at least
/// `reference_steps` steps, so every student node is shared.
Trajectory reference_trajectory(const NoiseOracle& oracle, const TimeSchedule& student, SolverKind solver,
                                std::size_t reference_steps, std::span<const double> x_init);

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  std::optional<LatencyReport> latency;
  std::map<std::string, EpdParams> trained;  // keyed by row label
};

/// Runs the full solver x budget x K grid and writes metrics.csv,
/// trajectory CSVs, trained parameters and (optionally) latency.csv into
/// config.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& config, Executor& executor);

struct FixtureEntry {
  std::filesystem::path path;
  bool ok = true;
  std::vector<std::string> violations;
  Vec output_scaling;  // o_n per step
};

struct FixtureReport {
  std::vector<FixtureEntry> entries;
  bool all_ok() const;
};

/// Checks a parameter document without throwing on the first problem.
FixtureEntry check_params_document(const nlohmann::json& j);
FixtureReport validate_fixtures(std::span<const std::filesystem::path> paths);

}  // namespace epd
