#include "epd/distill.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace epd {

TeacherSet generate_teacher_set(const NoiseOracle& oracle, const TimeSchedule& student, SolverKind solver,
                                std::size_t inserted, std::vector<Vec> noises, bool teacher_afs) {
  const TimeSchedule fine = refine_for_teacher(student, inserted);
  const std::size_t n = student.steps();
  const std::size_t fine_steps = fine.steps();
  TeacherSet set;
  set.solver = solver;
  set.inserted = inserted;
  set.schedule = student;
  set.refs.resize(noises.size());
  for (std::size_t i = 0; i < noises.size(); ++i) {
    const Trajectory traj = run_sampler(solver, oracle, fine, noises[i], teacher_afs);
    auto& refs = set.refs[i];
    refs.resize(n + 1);
    for (std::size_t node = 0; node <= n; ++node) refs[node] = traj.states[fine_steps - node * (inserted + 1)];
    refs[n] = noises[i];
  }
  set.noises = std::move(noises);
  return set;
}

Vec FeatureMap::apply(std::span<const double> x) const {
  if (identity()) return Vec(x.begin(), x.end());
  Vec out(rows.size(), 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != x.size()) throw InvalidArgument("feature map: row length != state dimension");
    for (std::size_t c = 0; c < x.size(); ++c) out[r] += rows[r][c] * x[c];
  }
  return out;
}

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

double node_distance(std::span<const double> x, std::span<const double> y, std::size_t node,
                     const FeatureMap& features) {
  if (node == 0 && !features.identity()) return squared_distance(features.apply(x), features.apply(y));
  return squared_distance(x, y);
}

void check_teacher(const TimeSchedule& schedule, const TeacherSet& teacher) {
  if (teacher.schedule.times != schedule.times) throw InvalidArgument("teacher set was built for another schedule");
}

}  // namespace

Vec rollout_and_losses(const EpdParams& params, const NoiseOracle& oracle, Executor& executor,
                       const TimeSchedule& schedule, const TeacherSet& teacher,
                       std::span<const std::size_t> batch, const FeatureMap& features) {
  check_teacher(schedule, teacher);
  const std::size_t n = schedule.steps();
  std::vector<std::size_t> owned;
  if (batch.empty()) {
    owned = all_indices(teacher.size());
    batch = owned;
  }
  Vec losses(n, 0.0);
  for (std::size_t i : batch) {
    const Trajectory traj = run_epd(params, oracle, executor, schedule, teacher.noises.at(i), params.plugin);
    for (std::size_t node = 0; node < n; ++node)
      losses[node] += node_distance(traj.states[n - node], teacher.refs[i][node], node, features);
  }
  for (double& l : losses) l /= static_cast<double>(batch.size());
  return losses;
}

double node_loss(const EpdParams& params, const NoiseOracle& oracle, Executor& executor,
                 const TimeSchedule& schedule, const TeacherSet& teacher, std::size_t node,
                 std::span<const std::size_t> batch, const FeatureMap& features) {
  const std::size_t n = schedule.steps();
  if (node >= n) throw InvalidArgument("node_loss: node index out of range");
  double acc = 0.0;
  for (std::size_t i : batch) {
    const Trajectory traj =
        run_epd(params, oracle, executor, schedule, teacher.noises.at(i), params.plugin, AfsVariant::scaled, n - node);
    acc += node_distance(traj.states.back(), teacher.refs[i][node], node, features);
  }
  return acc / static_cast<double>(batch.size());
}

std::size_t influencing_count(std::size_t steps, std::size_t K, std::size_t node) {
  if (node >= steps) return 0;
  return (steps - node) * K * 4;
}

Vec fd_gradient(const std::function<double(std::span<const double>)>& loss, std::span<const double> theta,
                std::size_t active, double fd_step, Executor& executor) {
  if (!(fd_step > 0.0)) throw InvalidArgument("fd_gradient: step must be positive");
  active = std::min(active, theta.size());
  Vec probes(2 * active);
  executor.parallel_for(2 * active, [&](std::size_t task) {
    Vec shifted(theta.begin(), theta.end());
    shifted[task / 2] += (task % 2 == 0) ? fd_step : -fd_step;
    probes[task] = loss(shifted);
  });
  Vec grad(theta.size(), 0.0);
  for (std::size_t p = 0; p < active; ++p) {
    if (!std::isfinite(probes[2 * p]) || !std::isfinite(probes[2 * p + 1]))
      throw TrainingDiverged("fd_gradient: non-finite loss probing parameter " + std::to_string(p));
    grad[p] = (probes[2 * p] - probes[2 * p + 1]) / (2.0 * fd_step);
  }
  return grad;
}

void AdamState::step(std::span<double> theta, std::span<const double> grad, const AdamConfig& cfg,
                     std::size_t active) {
  if (theta.size() != m_.size() || grad.size() != m_.size()) throw InvalidArgument("adam: size mismatch");
  active = std::min(active, theta.size());
  for (std::size_t i = 0; i < active; ++i) {
    ++t_[i];
    m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * grad[i];
    v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double t = static_cast<double>(t_[i]);
    const double m_hat = m_[i] / (1.0 - std::pow(cfg.beta1, t));
    const double v_hat = v_[i] / (1.0 - std::pow(cfg.beta2, t));
    theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void adam_step(AdamState& state, std::span<double> theta, std::span<const double> grad, const AdamConfig& cfg) {
  state.step(theta, grad, cfg);
}

void TrainConfig::validate() const {
  if (samples == 0 || batch == 0 || iterations == 0 || K == 0 || steps == 0)
    throw InvalidArgument("train: sizes must be positive");
  if (batch > samples) throw InvalidArgument("train: batch larger than sample pool");
  if (!(loss_floor >= 0.0)) throw InvalidArgument("train: loss floor must be nonnegative");
  if (!(adam.lr > 0.0) || !(fd_step > 0.0)) throw InvalidArgument("train: rates must be positive");
  if (!(bounds.s_width > 0.0) || !(bounds.sig_width > 0.0)) throw InvalidArgument("train: bounds must be positive");
  if (teacher == SolverKind::epd || teacher == SolverKind::epd_plugin)
    throw InvalidArgument("train: teacher must be a training-free solver");
}

void write_train_log_csv(std::ostream& out, const TrainLog& log, bool include_wall) {
  out << "iteration,node,loss" << (include_wall ? ",wall_ms" : "") << '\n';
  char buf[64];
  for (const auto& e : log.entries) {
    std::snprintf(buf, sizeof buf, "%.10e", e.loss);
    out << e.iteration << ',' << e.node << ',' << buf;
    if (include_wall) {
      std::snprintf(buf, sizeof buf, "%.3f", e.wall_ms);
      out << ',' << buf;
    }
    out << '\n';
  }
}

TeacherSet training_teacher_set(const TrainConfig& config, const NoiseOracle& oracle) {
  std::mt19937_64 rng(config.seed);
  auto noises = sample_initial(rng, config.t_max, oracle.dim(), config.samples);
  return generate_teacher_set(oracle, config.schedule(), config.teacher, config.inserted, std::move(noises),
                              config.teacher_afs);
}

std::pair<EpdParams, TrainLog> train(const TrainConfig& config, const NoiseOracle& oracle, Executor& executor) {
  config.validate();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  const TimeSchedule schedule = config.schedule();
  const TeacherSet teacher = training_teacher_set(config, oracle);
  // Separate stream for batch selection so the pool does not depend on it.
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  EpdParams params = initial_params(config.K, config.steps, config.bounds);
  params.afs = config.afs;
  params.plugin = config.plugin;
  params.schedule_kind = config.schedule_kind;
  params.t_min = config.t_min;
  params.t_max = config.t_max;
  params.rho = config.rho;

  const std::size_t n = config.steps;
  Vec theta = params.flatten();
  AdamState adam(theta.size());

  std::vector<std::size_t> monitor(config.batch);
  std::iota(monitor.begin(), monitor.end(), 0);
  std::vector<std::size_t> pool = all_indices(config.samples);

  auto loss_at = [&](std::span<const double> th, std::size_t node, std::span<const std::size_t> batch) {
    EpdParams p = params;
    p.assign(th);
    return node_loss(p, oracle, Executor::inline_executor(), schedule, teacher, node, batch, config.final_features);
  };

  TrainLog log;
  log.initial_monitor_loss = loss_at(theta, 0, monitor);
  double best = log.initial_monitor_loss;
  std::size_t stall = 0;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    // partial Fisher-Yates: first `batch` entries of pool become the batch
    for (std::size_t i = 0; i < config.batch; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    const std::span<const std::size_t> batch(pool.data(), config.batch);

    for (std::size_t node = n; node-- > 0;) {
      const double loss = loss_at(theta, node, batch);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at iteration " << it << ", node " << node << "; params "
            << params_to_json([&] { EpdParams p = params; p.assign(theta); return p; }()).dump();
        throw TrainingDiverged(msg.str());
      }
      const double wall_before = std::chrono::duration<double, std::milli>(clock::now() - start).count();
      if (loss <= config.loss_floor) {
        log.entries.push_back({it, node, loss, wall_before});
        continue;
      }
      const std::size_t active = influencing_count(n, config.K, node);
      const Vec grad = fd_gradient([&](std::span<const double> th) { return loss_at(th, node, batch); }, theta,
                                   active, config.fd_step, executor);
      adam.step(theta, grad, config.adam, active);
      const double wall = std::chrono::duration<double, std::milli>(clock::now() - start).count();
      log.entries.push_back({it, node, loss, wall});
    }

    const double monitored = loss_at(theta, 0, monitor);
    log.monitor_loss.push_back(monitored);
    log.iterations_run = it + 1;
    if (monitored < best * (1.0 - config.min_rel_improvement)) {
      best = monitored;
      stall = 0;
    } else if (config.patience > 0 && ++stall >= config.patience) {
      log.stopped_early = true;
      break;
    }
  }

  params.assign(theta);
  log.params = params;
  return {params, log};
}

}  // namespace epd
