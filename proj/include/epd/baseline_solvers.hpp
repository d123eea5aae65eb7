#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include "epd/schedules.hpp"
#include "epd/score_oracle.hpp"

namespace epd {

// Step conventions: every step moves a state from t_cur (= t_{n+1}) down to
// t_next (= t_n), with h = t_next - t_cur <= 0.

using Direction = std::optional<std::span<const double>>;

struct StepOutput {
  Vec x;  // state at t_next
  Vec d;  // gradient to remember (start gradient, or ensemble gradient for plugins)
};

/// Ordered states visited by a sampler, t_N first.
struct Trajectory {
  Vec times;
  std::vector<Vec> states;
  std::size_t nfe = 0;       // oracle evaluations issued
  std::size_t para_nfe = 0;  // sequential depth when independent calls overlap

  const Vec& endpoint() const { return states.back(); }
};

/// Last three gradients, most recent first.
class HistoryBuffer {
 public:
  static constexpr std::size_t kCapacity = 3;

  void push(Vec d);
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  const Vec& operator[](std::size_t i) const { return slots_[i]; }
  void clear() { size_ = 0; }

 private:
  std::array<Vec, kCapacity> slots_;
  std::size_t size_ = 0;
};

/// Adams-Bashforth numerators for 0..3 history entries, current slot first;
/// each row is divided by kIpndmDenominators[k].
inline constexpr std::array<std::array<int, 4>, 4> kIpndmNumerators{{
    {1, 0, 0, 0},
    {3, -1, 0, 0},
    {23, -16, 5, 0},
    {55, -59, 37, -9},
}};
inline constexpr std::array<int, 4> kIpndmDenominators{1, 2, 12, 24};

/// d' = sum_j c_j * (current, history[0], ...) with the row chosen by the
/// history length (capped at 3).
Vec ipndm_combine(std::span<const double> current, const HistoryBuffer& history);

StepOutput euler_step(const NoiseOracle& oracle, std::span<const double> x, double t_cur, double t_next,
                      Direction d_override = std::nullopt);

Vec heun_step(const NoiseOracle& oracle, std::span<const double> x, double t_cur, double t_next,
              Direction d_override = std::nullopt);

/// Midpoint step at s = sqrt(t_cur * t_next).
Vec dpm2_step(const NoiseOracle& oracle, std::span<const double> x, double t_cur, double t_next,
              Direction d_override = std::nullopt);

/// Returns the new state and the current gradient; the caller pushes the
/// gradient into `history` afterwards.
StepOutput ipndm_step(const NoiseOracle& oracle, std::span<const double> x, double t_cur, double t_next,
                      const HistoryBuffer& history, Direction d_override = std::nullopt);

enum class AfsVariant {
  scaled,     // x / sqrt(1 + t^2)
  inverse_t,  // x / t
  raw,        // x
};

std::string to_string(AfsVariant variant);
AfsVariant parse_afs_variant(std::string_view name);

/// Analytic stand-in for eps(x_{t_N}, t_N) used by the first step.
Vec afs_direction(std::span<const double> x, double t_max, AfsVariant variant = AfsVariant::scaled);

enum class SolverKind { ddim, heun, dpm2, ipndm, epd, epd_plugin };

std::string to_string(SolverKind kind);
SolverKind parse_solver_kind(std::string_view name);

/// Evaluations per step for a training-free solver (1 or 2).
std::size_t evals_per_step(SolverKind kind);

/// nfe and para_nfe of a baseline run with the given step count.
std::size_t baseline_nfe(SolverKind kind, std::size_t steps, bool afs);

Trajectory run_sampler(SolverKind kind, const NoiseOracle& oracle, const TimeSchedule& schedule,
                       std::span<const double> x_init, bool afs, AfsVariant variant = AfsVariant::scaled);

/// Columns: step_index, t, x0..x{d-1}.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace epd
