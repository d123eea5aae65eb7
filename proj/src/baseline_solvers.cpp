#include "epd/baseline_solvers.hpp"

#include <cmath>
#include <cstdio>

namespace epd {

void HistoryBuffer::push(Vec d) {
  for (std::size_t i = kCapacity - 1; i > 0; --i) slots_[i] = std::move(slots_[i - 1]);
  slots_[0] = std::move(d);
  if (size_ < kCapacity) ++size_;
}

Vec ipndm_combine(std::span<const double> current, const HistoryBuffer& history) {
  const std::size_t k = history.size();
  const auto& num = kIpndmNumerators[k];
  const double den = kIpndmDenominators[k];
  Vec out(current.size());
  for (std::size_t i = 0; i < current.size(); ++i) {
    double acc = num[0] * current[i];
    for (std::size_t j = 0; j < k; ++j) acc += num[j + 1] * history[j][i];
    out[i] = acc / den;
  }
  return out;
}

namespace {

Vec start_gradient(const NoiseOracle& oracle, std::span<const double> x, double t_cur, Direction d_override) {
  if (d_override) {
    if (d_override->size() != x.size()) throw InvalidArgument("step: override has wrong dimension");
    return Vec(d_override->begin(), d_override->end());
  }
  return oracle.noise_prediction(x, t_cur);
}

}  // namespace

StepOutput euler_step(const NoiseOracle& oracle, std::span<const double> x, double t_cur, double t_next,
                      Direction d_override) {
  Vec d = start_gradient(oracle, x, t_cur, d_override);
  Vec x_new = axpy(x, t_next - t_cur, d);
  return {std::move(x_new), std::move(d)};
}

Vec heun_step(const NoiseOracle& oracle, std::span<const double> x, double t_cur, double t_next,
              Direction d_override) {
  const double h = t_next - t_cur;
  const Vec d = start_gradient(oracle, x, t_cur, d_override);
  const Vec x_pred = axpy(x, h, d);
  const Vec d_end = oracle.noise_prediction(x_pred, t_next);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + 0.5 * h * (d[i] + d_end[i]);
  return out;
}

Vec dpm2_step(const NoiseOracle& oracle, std::span<const double> x, double t_cur, double t_next,
              Direction d_override) {
  const double s = std::sqrt(t_cur * t_next);
  const Vec d = start_gradient(oracle, x, t_cur, d_override);
  const Vec x_mid = axpy(x, s - t_cur, d);
  const Vec d_mid = oracle.noise_prediction(x_mid, s);
  return axpy(x, t_next - t_cur, d_mid);
}

StepOutput ipndm_step(const NoiseOracle& oracle, std::span<const double> x, double t_cur, double t_next,
                      const HistoryBuffer& history, Direction d_override) {
  Vec d = start_gradient(oracle, x, t_cur, d_override);
  const Vec d_comb = ipndm_combine(d, history);
  return {axpy(x, t_next - t_cur, d_comb), std::move(d)};
}

std::string to_string(AfsVariant variant) {
  switch (variant) {
    case AfsVariant::scaled: return "scaled";
    case AfsVariant::inverse_t: return "inverse_t";
    case AfsVariant::raw: return "raw";
  }
  return "unknown";
}

AfsVariant parse_afs_variant(std::string_view name) {
  if (name == "scaled") return AfsVariant::scaled;
  if (name == "inverse_t") return AfsVariant::inverse_t;
  if (name == "raw") return AfsVariant::raw;
  throw InvalidArgument("unknown AFS variant '" + std::string(name) + "'");
}

Vec afs_direction(std::span<const double> x, double t_max, AfsVariant variant) {
  double scale = 1.0;
  switch (variant) {
    case AfsVariant::scaled: scale = 1.0 / std::sqrt(1.0 + t_max * t_max); break;
    case AfsVariant::inverse_t:
      if (!(t_max > 0.0)) throw InvalidArgument("afs: t_max must be positive");
      scale = 1.0 / t_max;
      break;
    case AfsVariant::raw: break;
  }
  Vec out(x.begin(), x.end());
  for (double& v : out) v *= scale;
  return out;
}

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::ddim: return "ddim";
    case SolverKind::heun: return "heun";
    case SolverKind::dpm2: return "dpm2";
    case SolverKind::ipndm: return "ipndm";
    case SolverKind::epd: return "epd";
    case SolverKind::epd_plugin: return "epd_plugin";
  }
  return "unknown";
}

SolverKind parse_solver_kind(std::string_view name) {
  if (name == "ddim" || name == "euler") return SolverKind::ddim;
  if (name == "heun" || name == "edm") return SolverKind::heun;
  if (name == "dpm2" || name == "dpm_solver_2") return SolverKind::dpm2;
  if (name == "ipndm") return SolverKind::ipndm;
  if (name == "epd") return SolverKind::epd;
  if (name == "epd_plugin") return SolverKind::epd_plugin;
  throw InvalidArgument("unknown solver '" + std::string(name) + "'");
}

std::size_t evals_per_step(SolverKind kind) {
  switch (kind) {
    case SolverKind::ddim:
    case SolverKind::ipndm: return 1;
    default: return 2;
  }
}

std::size_t baseline_nfe(SolverKind kind, std::size_t steps, bool afs) {
  const std::size_t n = evals_per_step(kind) * steps;
  return afs ? n - 1 : n;
}

Trajectory run_sampler(SolverKind kind, const NoiseOracle& oracle, const TimeSchedule& schedule,
                       std::span<const double> x_init, bool afs, AfsVariant variant) {
  if (schedule.times.size() < 2) throw InvalidArgument("run_sampler: schedule too short");
  if (x_init.size() != oracle.dim()) throw InvalidArgument("run_sampler: initial state has wrong dimension");
  if (kind == SolverKind::epd || kind == SolverKind::epd_plugin)
    throw InvalidArgument("run_sampler: EPD solvers need parameters, use run_epd");

  const std::size_t n_steps = schedule.steps();
  Trajectory traj;
  traj.times.reserve(n_steps + 1);
  traj.states.reserve(n_steps + 1);
  traj.times.push_back(schedule.t_max());
  traj.states.emplace_back(x_init.begin(), x_init.end());

  HistoryBuffer history;
  for (std::size_t j = 0; j < n_steps; ++j) {
    const double t_cur = schedule.times[n_steps - j];
    const double t_next = schedule.times[n_steps - j - 1];
    const Vec& x = traj.states.back();
    std::optional<Vec> afs_d;
    if (afs && j == 0) afs_d = afs_direction(x, t_cur, variant);
    const Direction over = afs_d ? Direction(*afs_d) : std::nullopt;

    Vec x_new;
    switch (kind) {
      case SolverKind::ddim: x_new = euler_step(oracle, x, t_cur, t_next, over).x; break;
      case SolverKind::heun: x_new = heun_step(oracle, x, t_cur, t_next, over); break;
      case SolverKind::dpm2: x_new = dpm2_step(oracle, x, t_cur, t_next, over); break;
      case SolverKind::ipndm: {
        auto out = ipndm_step(oracle, x, t_cur, t_next, history, over);
        history.push(std::move(out.d));
        x_new = std::move(out.x);
        break;
      }
      default: break;
    }
    traj.times.push_back(t_next);
    traj.states.push_back(std::move(x_new));
  }
  traj.nfe = baseline_nfe(kind, n_steps, afs);
  traj.para_nfe = traj.nfe;
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const std::size_t dim = traj.states.empty() ? 0 : traj.states.front().size();
  out << "step_index,t";
  for (std::size_t d = 0; d < dim; ++d) out << ",x" << d;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", traj.times[i]);
    out << i << ',' << buf;
    for (double v : traj.states[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace epd
