#pragma once

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "epd/baseline_solvers.hpp"
#include "epd/parallel_exec.hpp"

namespace epd {

/// Widths of the sigmoid-bounded multipliers: s in [1 - s_width/2, 1 + s_width/2]
/// and likewise for sigma.
struct Bounds {
  double s_width = 0.1;
  double sig_width = 0.1;
};

enum class ParamMode {
  raw,          // unconstrained scalars, mapped through sigmoid/softmax
  constrained,  // r, lambda, s, sigma given directly (as in published tables)
};

/// One branch's four scalars. Interpretation depends on EpdParams::mode.
struct BranchParams {
  double r = 0.0;
  double lam = 0.0;
  double s = 0.0;
  double sig = 0.0;
};
using BranchRaw = BranchParams;

/// Per-branch quantities in the form the update consumes.
struct DerivedBranch {
  double r = 0.5;
  double tau = 0.0;       // intermediate time, t_cur^r * t_next^(1-r)
  double lam = 1.0;       // simplex weight
  double s_mult = 1.0;    // timestep multiplier, tau + delta = s_mult * tau
  double sig_mult = 1.0;  // output modulation
  double delta = 0.0;     // (s_mult - 1) * tau

  double eval_time() const { return tau + delta; }
};

/// Learned parameters for an N-step, K-branch sampler. steps[j] drives the
/// j-th step visited, i.e. from schedule.times[N - j] to schedule.times[N - j - 1].
struct EpdParams {
  std::size_t K = 1;
  Bounds bounds;
  ParamMode mode = ParamMode::raw;
  std::vector<std::vector<BranchParams>> steps;

  // metadata
  bool afs = true;
  bool plugin = false;
  ScheduleKind schedule_kind = ScheduleKind::polynomial;
  double t_min = kDefaultTMin;
  double t_max = kDefaultTMax;
  double rho = kDefaultRho;
  nlohmann::json extra = nlohmann::json::object();  // free-form provenance fields

  std::size_t num_steps() const { return steps.size(); }
  std::size_t raw_size() const { return steps.size() * K * 4; }

  /// Checks shape invariants (uniform K, N >= 1, finite values) and, for
  /// constrained mode, r in [0,1], lambda a simplex within 1e-4, s, sigma > 0.
  void validate() const;

  /// Raw values flattened as [step][branch][r, lam, s, sig].
  Vec flatten() const;
  void assign(std::span<const double> flat);

  TimeSchedule schedule() const;
};

double sigmoid(double z);
double logit(double p);

/// Raw parameters mapped to constrained form for the interval t_cur -> t_next.
std::vector<DerivedBranch> derive_step_params(std::span<const BranchRaw> raw, const Bounds& bounds,
                                              double t_cur, double t_next);

/// Constrained (table) values for the interval, no renormalisation.
std::vector<DerivedBranch> constrained_step_params(std::span<const BranchParams> values, double t_cur,
                                                   double t_next);

/// Dispatches on params.mode.
std::vector<DerivedBranch> step_branches(const EpdParams& params, std::size_t step, double t_cur,
                                         double t_next);

/// o_n = sum_k lam_k * sig_k - 1.
double output_scaling(std::span<const DerivedBranch> branches);

/// Raw parameters whose derived form is the given constrained one (up to
/// rounding of the inverse maps); lambdas are renormalised.
EpdParams to_raw(const EpdParams& constrained);

/// Default starting point: r spread evenly over (0, 1), uniform lambda,
/// s = sigma = 1.
EpdParams initial_params(std::size_t K, std::size_t steps, const Bounds& bounds = {});

/// Ensemble gradient sum_k lam_k sig_k eps(x_tau_k, tau_k + delta_k), branch
/// states Euler-predicted from d0; evaluated through the executor and reduced
/// in ascending branch order.
Vec ensemble_gradient(const NoiseOracle& oracle, Executor& executor, std::span<const double> x,
                      double t_cur, std::span<const double> d0, std::span<const DerivedBranch> branches);

/// x + h * sum_k lam_k sig_k g_k. Sequential depth 2 (1 with override), 1 + K
/// evaluations (K with override).
Vec epd_step(const NoiseOracle& oracle, Executor& executor, std::span<const double> x, double t_cur,
             double t_next, std::span<const DerivedBranch> branches, Direction d_override = std::nullopt);

/// iPNDM update with the ensemble gradient in the current slot. Returns the
/// new state and the ensemble gradient for history insertion.
StepOutput epd_plugin_step(const NoiseOracle& oracle, Executor& executor, std::span<const double> x,
                           double t_cur, double t_next, const HistoryBuffer& history,
                           std::span<const DerivedBranch> branches, Direction d_override = std::nullopt);

/// Runs the whole sampler. nfe = N(1+K) - [afs], para_nfe = 2N - [afs].
/// `max_steps` truncates the run after that many steps (for training prefixes).
Trajectory run_epd(const EpdParams& params, const NoiseOracle& oracle, Executor& executor,
                   const TimeSchedule& schedule, std::span<const double> x_init, bool plugin,
                   AfsVariant variant = AfsVariant::scaled,
                   std::optional<std::size_t> max_steps = std::nullopt);

nlohmann::json params_to_json(const EpdParams& params);
EpdParams params_from_json(const nlohmann::json& j);
EpdParams load_params(const std::filesystem::path& path);
void save_params(const EpdParams& params, const std::filesystem::path& path);

}  // namespace epd
