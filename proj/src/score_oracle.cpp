#include "epd/score_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

namespace epd {

GaussianMixture::GaussianMixture(std::size_t dim, std::vector<MixtureComponent> components)
    : dim_(dim), components_(std::move(components)) {
  if (dim_ == 0) throw InvalidArgument("gmm: dim must be positive");
  if (components_.empty()) throw InvalidArgument("gmm: at least one component required");
  double total = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    if (!(c.weight > 0.0) || !std::isfinite(c.weight))
      throw InvalidArgument("gmm: component " + std::to_string(i) + " has non-positive weight");
    if (c.mean.size() != dim_ || c.var.size() != dim_)
      throw InvalidArgument("gmm: component " + std::to_string(i) + " mean/var length != dim");
    for (double v : c.var)
      if (!(v > 0.0) || !std::isfinite(v))
        throw InvalidArgument("gmm: component " + std::to_string(i) + " has non-positive variance");
    for (double m : c.mean)
      if (!std::isfinite(m)) throw InvalidArgument("gmm: non-finite mean");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("gmm: weights must sum to 1");
  log_weights_.reserve(components_.size());
  for (const auto& c : components_) log_weights_.push_back(std::log(c.weight));
}

void GaussianMixture::check_args(std::span<const double> x, double t) const {
  if (x.size() != dim_)
    throw InvalidArgument("gmm: state has length " + std::to_string(x.size()) + ", expected " +
                          std::to_string(dim_));
  if (!(t > 0.0)) throw InvalidArgument("gmm: time must be positive");
}

Vec GaussianMixture::component_log_densities(std::span<const double> x, double t) const {
  const double t2 = t * t;
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  Vec logp(components_.size());
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    double acc = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double s2 = c.var[d] + t2;
      const double e = x[d] - c.mean[d];
      acc += e * e / s2 + std::log(s2) + log_2pi;
    }
    logp[i] = log_weights_[i] - 0.5 * acc;
  }
  return logp;
}

Vec GaussianMixture::responsibilities(std::span<const double> x, double t) const {
  check_args(x, t);
  Vec gamma = component_log_densities(x, t);
  const double top = *std::max_element(gamma.begin(), gamma.end());
  double z = 0.0;
  for (double& g : gamma) {
    g = std::exp(g - top);
    z += g;
  }
  for (double& g : gamma) g /= z;
  return gamma;
}

double GaussianMixture::log_density(std::span<const double> x, double t) const {
  check_args(x, t);
  const Vec logp = component_log_densities(x, t);
  const double top = *std::max_element(logp.begin(), logp.end());
  double z = 0.0;
  for (double l : logp) z += std::exp(l - top);
  return top + std::log(z);
}

Vec GaussianMixture::score(std::span<const double> x, double t) const {
  const Vec gamma = responsibilities(x, t);
  const double t2 = t * t;
  Vec out(dim_, 0.0);
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    for (std::size_t d = 0; d < dim_; ++d) out[d] += gamma[i] * (c.mean[d] - x[d]) / (c.var[d] + t2);
  }
  return out;
}

Vec GaussianMixture::noise_prediction(std::span<const double> x, double t) const {
  Vec eps = score(x, t);
  for (double& e : eps) e *= -t;
  return eps;
}

nlohmann::json GaussianMixture::to_json() const {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : components_)
    comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"var", c.var}});
  return {{"dim", dim_}, {"components", comps}};
}

GaussianMixture GaussianMixture::from_json(const nlohmann::json& j) {
  try {
    const auto dim = j.at("dim").get<std::size_t>();
    std::vector<MixtureComponent> comps;
    for (const auto& c : j.at("components")) {
      comps.push_back({c.at("weight").get<double>(), c.at("mean").get<Vec>(), c.at("var").get<Vec>()});
    }
    return GaussianMixture(dim, std::move(comps));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("gmm: malformed specification: ") + e.what());
  }
}

GaussianMixture load_gmm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("gmm: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("gmm: " + path.string() + ": " + e.what());
  }
  return GaussianMixture::from_json(j);
}

GaussianMixture default_gmm() {
  return GaussianMixture(2, {
                                {0.40, {-1.0, 0.0}, {0.50, 0.05}},
                                {0.35, {1.5, 1.0}, {0.05, 0.50}},
                                {0.25, {0.0, -1.5}, {0.20, 0.20}},
                            });
}

GaussianMixture single_gaussian(Vec mean, Vec var) {
  const std::size_t dim = mean.size();
  return GaussianMixture(dim, {{1.0, std::move(mean), std::move(var)}});
}

Vec closed_form_flow(std::span<const double> mean, std::span<const double> var,
                     std::span<const double> x, double t_from, double t_to) {
  if (!(t_from > 0.0) || !(t_to > 0.0)) throw InvalidArgument("closed_form_flow: times must be positive");
  if (mean.size() != x.size() || var.size() != x.size())
    throw InvalidArgument("closed_form_flow: dimension mismatch");
  Vec out(x.size());
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double ratio = std::sqrt((var[d] + t_to * t_to) / (var[d] + t_from * t_from));
    out[d] = mean[d] + (x[d] - mean[d]) * ratio;
  }
  return out;
}

std::vector<Vec> sample_initial(std::mt19937_64& rng, double t_max, std::size_t dim,
                                std::size_t count) {
  if (!(t_max > 0.0)) throw InvalidArgument("sample_initial: t_max must be positive");
  if (dim == 0) throw InvalidArgument("sample_initial: dim must be positive");
  std::normal_distribution<double> normal(0.0, t_max);
  std::vector<Vec> out(count, Vec(dim));
  for (auto& v : out)
    for (auto& e : v) e = normal(rng);
  return out;
}

CostOracle::CostOracle(OraclePtr base, std::chrono::nanoseconds cost, CostMode mode)
    : base_(std::move(base)), cost_(cost), mode_(mode) {
  if (!base_) throw InvalidArgument("with_cost: null base oracle");
  if (cost_.count() < 0) throw InvalidArgument("with_cost: cost must be nonnegative");
}

Vec CostOracle::noise_prediction(std::span<const double> x, double t) const {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + cost_;
  Vec out = base_->noise_prediction(x, t);
  if (cost_.count() == 0) return out;
  if (mode_ == CostMode::blocking) {
    std::this_thread::sleep_until(deadline);
  } else {
    volatile double sink = 0.0;
    while (clock::now() < deadline)
      for (int i = 0; i < 64; ++i) sink = sink + 1e-9 * i;
  }
  return out;
}

OraclePtr with_cost(OraclePtr base, std::int64_t cost_ns, CostMode mode) {
  return std::make_shared<CostOracle>(std::move(base), std::chrono::nanoseconds(cost_ns), mode);
}

}  // namespace epd
