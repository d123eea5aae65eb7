#include "epd/epd_solver.hpp"

#include <algorithm>
#include <cmath>

namespace epd {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

namespace {

void check_interval(double t_cur, double t_next) {
  if (!(t_next > 0.0)) throw InvalidArgument("epd: times must be positive");
  if (!(t_next < t_cur)) throw InvalidArgument("epd: degenerate interval, need t_next < t_cur");
}

}  // namespace

std::vector<DerivedBranch> derive_step_params(std::span<const BranchRaw> raw, const Bounds& bounds,
                                              double t_cur, double t_next) {
  check_interval(t_cur, t_next);
  if (raw.empty()) throw InvalidArgument("epd: step has no branches");
  double top = raw[0].lam;
  for (const auto& b : raw) top = std::max(top, b.lam);
  double z = 0.0;
  for (const auto& b : raw) z += std::exp(b.lam - top);

  std::vector<DerivedBranch> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    auto& d = out[k];
    d.r = sigmoid(raw[k].r);
    d.tau = std::pow(t_cur, d.r) * std::pow(t_next, 1.0 - d.r);
    d.lam = std::exp(raw[k].lam - top) / z;
    d.s_mult = 1.0 + bounds.s_width * (sigmoid(raw[k].s) - 0.5);
    d.sig_mult = 1.0 + bounds.sig_width * (sigmoid(raw[k].sig) - 0.5);
    d.delta = (d.s_mult - 1.0) * d.tau;
  }
  return out;
}

std::vector<DerivedBranch> constrained_step_params(std::span<const BranchParams> values, double t_cur,
                                                   double t_next) {
  check_interval(t_cur, t_next);
  std::vector<DerivedBranch> out(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    auto& d = out[k];
    d.r = values[k].r;
    d.tau = std::pow(t_cur, d.r) * std::pow(t_next, 1.0 - d.r);
    d.lam = values[k].lam;
    d.s_mult = values[k].s;
    d.sig_mult = values[k].sig;
    d.delta = (d.s_mult - 1.0) * d.tau;
  }
  return out;
}

std::vector<DerivedBranch> step_branches(const EpdParams& params, std::size_t step, double t_cur,
                                         double t_next) {
  const auto& row = params.steps.at(step);
  if (params.mode == ParamMode::raw) return derive_step_params(row, params.bounds, t_cur, t_next);
  return constrained_step_params(row, t_cur, t_next);
}

double output_scaling(std::span<const DerivedBranch> branches) {
  double acc = 0.0;
  for (const auto& b : branches) acc += b.lam * b.sig_mult;
  return acc - 1.0;
}

void EpdParams::validate() const {
  if (K < 1) throw InvalidArgument("params: K must be at least 1");
  if (steps.empty()) throw InvalidArgument("params: at least one step required");
  if (!(bounds.s_width > 0.0) || !(bounds.sig_width > 0.0))
    throw InvalidArgument("params: bound widths must be positive");
  if (!(t_min > 0.0) || !(t_max > 0.0)) throw InvalidArgument("params: schedule times must be positive");
  for (std::size_t n = 0; n < steps.size(); ++n) {
    const auto& row = steps[n];
    const std::string where = "params: step " + std::to_string(n);
    if (row.size() != K) throw InvalidArgument(where + " has " + std::to_string(row.size()) + " branches, K=" + std::to_string(K));
    double lam_sum = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      const auto& b = row[k];
      const std::string at = where + " branch " + std::to_string(k);
      if (!std::isfinite(b.r) || !std::isfinite(b.lam) || !std::isfinite(b.s) || !std::isfinite(b.sig))
        throw InvalidArgument(at + ": non-finite value");
      if (mode == ParamMode::constrained) {
        if (b.r < 0.0 || b.r > 1.0) throw InvalidArgument(at + ": r outside [0, 1]");
        if (b.lam < 0.0) throw InvalidArgument(at + ": negative lambda");
        if (!(b.s > 0.0)) throw InvalidArgument(at + ": s must be positive");
        if (!(b.sig > 0.0)) throw InvalidArgument(at + ": sigma must be positive");
        lam_sum += b.lam;
      }
    }
    if (mode == ParamMode::constrained && std::abs(lam_sum - 1.0) > 1e-4)
      throw InvalidArgument(where + ": lambda sums to " + std::to_string(lam_sum) + ", not a simplex");
  }
}

Vec EpdParams::flatten() const {
  Vec out;
  out.reserve(raw_size());
  for (const auto& row : steps)
    for (const auto& b : row) out.insert(out.end(), {b.r, b.lam, b.s, b.sig});
  return out;
}

void EpdParams::assign(std::span<const double> flat) {
  if (flat.size() != raw_size()) throw InvalidArgument("params: flat vector has wrong size");
  std::size_t i = 0;
  for (auto& row : steps)
    for (auto& b : row) {
      b = {flat[i], flat[i + 1], flat[i + 2], flat[i + 3]};
      i += 4;
    }
}

TimeSchedule EpdParams::schedule() const {
  return build_schedule(schedule_kind, steps.size(), t_min, t_max, rho);
}

EpdParams to_raw(const EpdParams& constrained) {
  if (constrained.mode == ParamMode::raw) return constrained;
  EpdParams out = constrained;
  out.mode = ParamMode::raw;
  const auto clamp01 = [](double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); };
  for (auto& row : out.steps) {
    double lam_sum = 0.0;
    for (const auto& b : row) lam_sum += b.lam;
    for (auto& b : row) {
      b.r = logit(clamp01(b.r));
      b.lam = std::log(std::max(b.lam / lam_sum, 1e-300));
      b.s = logit(clamp01((b.s - 1.0) / out.bounds.s_width + 0.5));
      b.sig = logit(clamp01((b.sig - 1.0) / out.bounds.sig_width + 0.5));
    }
  }
  return out;
}

EpdParams initial_params(std::size_t K, std::size_t steps, const Bounds& bounds) {
  if (K < 1 || steps < 1) throw InvalidArgument("params: K and step count must be positive");
  EpdParams p;
  p.K = K;
  p.bounds = bounds;
  p.mode = ParamMode::raw;
  std::vector<BranchParams> row(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double r = static_cast<double>(k + 1) / static_cast<double>(K + 1);
    row[k].r = K == 1 ? 0.0 : logit(r);
  }
  p.steps.assign(steps, row);
  return p;
}

Vec ensemble_gradient(const NoiseOracle& oracle, Executor& executor, std::span<const double> x,
                      double t_cur, std::span<const double> d0, std::span<const DerivedBranch> branches) {
  std::vector<EvalRequest> requests(branches.size());
  for (std::size_t k = 0; k < branches.size(); ++k) {
    requests[k].state = axpy(x, branches[k].tau - t_cur, d0);
    requests[k].time = branches[k].eval_time();
    requests[k].branch = k;
  }
  const std::vector<Vec> g = par_map_eval(executor, oracle, requests);
  Vec acc(x.size(), 0.0);
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const double w = branches[k].lam * branches[k].sig_mult;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * g[k][i];
  }
  return acc;
}

namespace {

Vec start_direction(const NoiseOracle& oracle, std::span<const double> x, double t_cur, Direction d_override) {
  if (d_override) {
    if (d_override->size() != x.size()) throw InvalidArgument("epd: override has wrong dimension");
    return Vec(d_override->begin(), d_override->end());
  }
  return oracle.noise_prediction(x, t_cur);
}

}  // namespace

Vec epd_step(const NoiseOracle& oracle, Executor& executor, std::span<const double> x, double t_cur,
             double t_next, std::span<const DerivedBranch> branches, Direction d_override) {
  if (branches.empty()) throw InvalidArgument("epd_step: no branches");
  const Vec d0 = start_direction(oracle, x, t_cur, d_override);
  const Vec d = ensemble_gradient(oracle, executor, x, t_cur, d0, branches);
  return axpy(x, t_next - t_cur, d);
}

StepOutput epd_plugin_step(const NoiseOracle& oracle, Executor& executor, std::span<const double> x,
                           double t_cur, double t_next, const HistoryBuffer& history,
                           std::span<const DerivedBranch> branches, Direction d_override) {
  if (branches.empty()) throw InvalidArgument("epd_plugin_step: no branches");
  const Vec d0 = start_direction(oracle, x, t_cur, d_override);
  Vec d_epd = ensemble_gradient(oracle, executor, x, t_cur, d0, branches);
  const Vec d_comb = ipndm_combine(d_epd, history);
  return {axpy(x, t_next - t_cur, d_comb), std::move(d_epd)};
}

Trajectory run_epd(const EpdParams& params, const NoiseOracle& oracle, Executor& executor,
                   const TimeSchedule& schedule, std::span<const double> x_init, bool plugin,
                   AfsVariant variant, std::optional<std::size_t> max_steps) {
  if (schedule.times.size() < 2) throw InvalidArgument("run_epd: schedule too short");
  const std::size_t n_steps = schedule.steps();
  if (params.num_steps() != n_steps)
    throw InvalidArgument("run_epd: params have " + std::to_string(params.num_steps()) +
                          " steps, schedule has " + std::to_string(n_steps));
  if (x_init.size() != oracle.dim()) throw InvalidArgument("run_epd: initial state has wrong dimension");
  const std::size_t run_steps = std::min(n_steps, max_steps.value_or(n_steps));

  Trajectory traj;
  traj.times.push_back(schedule.t_max());
  traj.states.emplace_back(x_init.begin(), x_init.end());
  HistoryBuffer history;
  for (std::size_t j = 0; j < run_steps; ++j) {
    const double t_cur = schedule.times[n_steps - j];
    const double t_next = schedule.times[n_steps - j - 1];
    const Vec& x = traj.states.back();
    const auto branches = step_branches(params, j, t_cur, t_next);
    if (branches.size() != params.K) throw InvalidArgument("run_epd: mismatched branch count");

    std::optional<Vec> afs_d;
    if (params.afs && j == 0) afs_d = afs_direction(x, t_cur, variant);
    const Direction over = afs_d ? Direction(*afs_d) : std::nullopt;

    Vec x_new;
    if (plugin) {
      auto out = epd_plugin_step(oracle, executor, x, t_cur, t_next, history, branches, over);
      history.push(std::move(out.d));
      x_new = std::move(out.x);
    } else {
      x_new = epd_step(oracle, executor, x, t_cur, t_next, branches, over);
    }
    traj.nfe += params.K + (afs_d ? 0 : 1);
    traj.para_nfe += afs_d ? 1 : 2;
    traj.times.push_back(t_next);
    traj.states.push_back(std::move(x_new));
  }
  return traj;
}

}  // namespace epd
