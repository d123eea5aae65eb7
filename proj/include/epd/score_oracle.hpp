#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>

#include <nlohmann/json.hpp>

#include "epd/types.hpp"

namespace epd {

/// Noise-prediction function eps(x, t) driving the probability-flow ODE
/// dx/dt = eps(x, t) under sigma(t) = t, s(t) = 1.
///
/// Implementations must be immutable after construction: evaluation is
/// invoked concurrently from executor workers.
class NoiseOracle {
 public:
  virtual ~NoiseOracle() = default;
  virtual std::size_t dim() const = 0;
  virtual Vec noise_prediction(std::span<const double> x, double t) const = 0;
};

using OraclePtr = std::shared_ptr<const NoiseOracle>;

struct MixtureComponent {
  double weight = 0.0;
  Vec mean;
  Vec var;  // diagonal covariance entries
};

/// Diagonal-covariance Gaussian mixture. The diffused density at time t is
/// sum_i w_i N(x; mu_i, diag(v_i) + t^2 I), so score and noise prediction
/// are exact.
class GaussianMixture final : public NoiseOracle {
 public:
  GaussianMixture(std::size_t dim, std::vector<MixtureComponent> components);

  std::size_t dim() const override { return dim_; }
  const std::vector<MixtureComponent>& components() const { return components_; }

  Vec noise_prediction(std::span<const double> x, double t) const override;

  /// grad_x log p(x; t).
  Vec score(std::span<const double> x, double t) const;

  /// log p(x; t), log-sum-exp stabilised.
  double log_density(std::span<const double> x, double t) const;

  /// Posterior component responsibilities gamma_i(x, t).
  Vec responsibilities(std::span<const double> x, double t) const;

  nlohmann::json to_json() const;
  static GaussianMixture from_json(const nlohmann::json& j);

 private:
  void check_args(std::span<const double> x, double t) const;
  Vec component_log_densities(std::span<const double> x, double t) const;

  std::size_t dim_;
  std::vector<MixtureComponent> components_;
  Vec log_weights_;
};

GaussianMixture load_gmm(const std::filesystem::path& path);

/// Anisotropic 2-D, 3-component mixture used as the default benchmark model.
GaussianMixture default_gmm();

GaussianMixture single_gaussian(Vec mean, Vec var);

/// Exact probability-flow solution for one Gaussian component:
/// mean + (x - mean) * sqrt((var + t_to^2) / (var + t_from^2)).
Vec closed_form_flow(std::span<const double> mean, std::span<const double> var,
                     std::span<const double> x, double t_from, double t_to);

/// i.i.d. N(0, t_max^2 I) draws, deterministic for a given engine state.
std::vector<Vec> sample_initial(std::mt19937_64& rng, double t_max, std::size_t dim,
                                std::size_t count);

enum class CostMode {
  busy,      // spin on the calling thread's CPU
  blocking,  // park the calling thread, as when waiting on an accelerator
};

/// Value-transparent wrapper that makes every evaluation take at least
/// `cost` of wall time.
class CostOracle final : public NoiseOracle {
 public:
  CostOracle(OraclePtr base, std::chrono::nanoseconds cost, CostMode mode = CostMode::busy);

  std::size_t dim() const override { return base_->dim(); }
  Vec noise_prediction(std::span<const double> x, double t) const override;

  std::chrono::nanoseconds cost() const { return cost_; }
  CostMode mode() const { return mode_; }

 private:
  OraclePtr base_;
  std::chrono::nanoseconds cost_;
  CostMode mode_;
};

OraclePtr with_cost(OraclePtr base, std::int64_t cost_ns, CostMode mode = CostMode::busy);

/// Counts evaluations; used to check NFE accounting.
class CountingOracle final : public NoiseOracle {
 public:
  explicit CountingOracle(OraclePtr base) : base_(std::move(base)) {}

  std::size_t dim() const override { return base_->dim(); }
  Vec noise_prediction(std::span<const double> x, double t) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return base_->noise_prediction(x, t);
  }

  std::size_t calls() const { return calls_.load(); }
  void reset() { calls_.store(0); }

 private:
  OraclePtr base_;
  mutable std::atomic<std::size_t> calls_{0};
};

}  // namespace epd
