#pragma once

#include <functional>
#include <ostream>
#include <random>

#include "epd/epd_solver.hpp"

namespace epd {

/// Reference states at the student nodes, produced by a fine solver on the
/// refined schedule from shared initial noises.
struct TeacherSet {
  std::vector<Vec> noises;
  std::vector<std::vector<Vec>> refs;  // refs[sample][n], node n <-> schedule.times[n]; refs[i][N] == noises[i]
  SolverKind solver = SolverKind::dpm2;
  std::size_t inserted = 6;  // M
  TimeSchedule schedule;     // student schedule

  std::size_t size() const { return noises.size(); }
};

TeacherSet generate_teacher_set(const NoiseOracle& oracle, const TimeSchedule& student, SolverKind solver,
                                std::size_t inserted, std::vector<Vec> noises, bool teacher_afs = false);

/// Optional linear map applied to both states before the final-node distance.
/// Empty means identity (plain squared l2 in data space).
struct FeatureMap {
  std::vector<Vec> rows;

  bool identity() const { return rows.empty(); }
  Vec apply(std::span<const double> x) const;
};

/// Mean squared l2 distance to the teacher at each node n = 0..N-1 over the
/// selected samples (all when `batch` is empty). Node N is shared noise and
/// is not emitted.
Vec rollout_and_losses(const EpdParams& params, const NoiseOracle& oracle, Executor& executor,
                       const TimeSchedule& schedule, const TeacherSet& teacher,
                       std::span<const std::size_t> batch = {}, const FeatureMap& features = {});

/// Loss at a single node, rolling out only the steps that reach it.
double node_loss(const EpdParams& params, const NoiseOracle& oracle, Executor& executor,
                 const TimeSchedule& schedule, const TeacherSet& teacher, std::size_t node,
                 std::span<const std::size_t> batch, const FeatureMap& features = {});

/// Number of leading flattened raw parameters that can influence x_{t_n}.
std::size_t influencing_count(std::size_t steps, std::size_t K, std::size_t node);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Central differences over theta[0..active); the rest of the gradient is
/// exactly zero. Probes are fanned out over the executor.
Vec fd_gradient(const std::function<double(std::span<const double>)>& loss, std::span<const double> theta,
                std::size_t active, double fd_step, Executor& executor = Executor::inline_executor());

struct AdamConfig {
  double lr = 5e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Each entry keeps its own step count so that
/// updates restricted to a prefix leave the remaining moments untouched.
class AdamState {
 public:
  explicit AdamState(std::size_t size) : m_(size, 0.0), v_(size, 0.0), t_(size, 0) {}

  void step(std::span<double> theta, std::span<const double> grad, const AdamConfig& cfg, std::size_t active);
  void step(std::span<double> theta, std::span<const double> grad, const AdamConfig& cfg) {
    step(theta, grad, cfg, theta.size());
  }

 private:
  Vec m_, v_;
  std::vector<std::size_t> t_;
};

void adam_step(AdamState& state, std::span<double> theta, std::span<const double> grad, const AdamConfig& cfg);

struct TrainConfig {
  // teacher
  std::size_t inserted = 6;
  SolverKind teacher = SolverKind::dpm2;
  bool teacher_afs = false;
  // data
  std::size_t samples = 1024;
  std::size_t batch = 32;
  std::size_t iterations = 300;
  std::uint64_t seed = 0;
  // optimiser
  AdamConfig adam;
  double fd_step = 1e-4;
  std::size_t patience = 50;       // 0 disables early stopping
  double min_rel_improvement = 1e-4;
  // A node whose batch loss is at or below this is already exact to rounding;
  // its update is skipped, since Adam would turn the O(fd_step^2) residual of
  // the difference quotient into a full-size step.
  double loss_floor = 1e-20;
  // student
  std::size_t K = 2;
  Bounds bounds;
  ScheduleKind schedule_kind = ScheduleKind::polynomial;
  std::size_t steps = 3;
  double t_min = kDefaultTMin;
  double t_max = kDefaultTMax;
  double rho = kDefaultRho;
  bool afs = true;
  bool plugin = false;
  AfsVariant afs_variant = AfsVariant::scaled;
  FeatureMap final_features;

  void validate() const;
  TimeSchedule schedule() const { return build_schedule(schedule_kind, steps, t_min, t_max, rho); }
};

struct TrainLogEntry {
  std::size_t iteration = 0;
  std::size_t node = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  Vec monitor_loss;  // node-0 loss on a fixed batch, after each iteration
  double initial_monitor_loss = 0.0;
  std::size_t iterations_run = 0;
  bool stopped_early = false;
  EpdParams params;
};

/// iteration,node,loss,wall_ms
void write_train_log_csv(std::ostream& out, const TrainLog& log, bool include_wall = true);

/// Teacher set for the training pool drawn from config.seed.
TeacherSet training_teacher_set(const TrainConfig& config, const NoiseOracle& oracle);

std::pair<EpdParams, TrainLog> train(const TrainConfig& config, const NoiseOracle& oracle, Executor& executor);

}  // namespace epd
