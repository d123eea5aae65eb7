#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "epd/score_oracle.hpp"

namespace testutil {

using epd::Vec;

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// max_i |a_i - b_i| / max(max|b|, floor)
inline double rel_diff(std::span<const double> a, std::span<const double> b, double floor = 1e-300) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m / std::max(max_abs(b), floor);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec random_vec(std::mt19937_64& rng, std::size_t dim, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Vec v(dim);
  for (double& x : v) x = n(rng);
  return v;
}

/// Random diagonal mixture: 1-4 components, dim 1-4.
inline epd::GaussianMixture random_gmm(std::mt19937_64& rng, std::size_t dim = 0) {
  if (dim == 0) dim = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
  const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
  Vec w(n);
  double total = 0.0;
  for (double& x : w) total += (x = uniform(rng, 0.1, 1.0));
  std::vector<epd::MixtureComponent> comps;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    epd::MixtureComponent c;
    c.weight = (i + 1 == n) ? 1.0 - acc : w[i] / total;
    acc += c.weight;
    c.mean = random_vec(rng, dim, 2.0);
    c.var.resize(dim);
    for (double& v : c.var) v = uniform(rng, 0.05, 2.0);
    comps.push_back(std::move(c));
  }
  return epd::GaussianMixture(dim, std::move(comps));
}

/// Random interval t_cur > t_next inside [0.01, 80].
inline std::pair<double, double> random_interval(std::mt19937_64& rng) {
  const double a = std::exp(uniform(rng, std::log(0.01), std::log(80.0)));
  const double b = std::exp(uniform(rng, std::log(0.01), std::log(80.0)));
  if (a == b) return {a * 1.5, a};
  return {std::max(a, b), std::min(a, b)};
}

/// Oracle returning a constant vector.
class ConstantOracle final : public epd::NoiseOracle {
 public:
  explicit ConstantOracle(Vec c) : c_(std::move(c)) {}
  std::size_t dim() const override { return c_.size(); }
  Vec noise_prediction(std::span<const double>, double) const override { return c_; }

 private:
  Vec c_;
};

}  // namespace testutil
