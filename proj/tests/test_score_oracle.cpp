#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>

#include "test_util.hpp"

using namespace epd;
using testutil::rel_diff;

namespace {

// Central differences of log p with step 1e-6, times -t.
Vec fd_noise(const GaussianMixture& g, std::span<const double> x, double t) {
  const double h = 1e-6;
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec xp(x.begin(), x.end()), xm(x.begin(), x.end());
    xp[i] += h;
    xm[i] -= h;
    out[i] = -t * (g.log_density(xp, t) - g.log_density(xm, t)) / (2 * h);
  }
  return out;
}

GaussianMixture pinned_mixture() {
  return GaussianMixture(2, {{0.7, {1.0, 0.0}, {1.0, 1.0}}, {0.3, {-2.0, 0.0}, {1.0, 1.0}}});
}

}  // namespace

TEST_CASE("single component closed form") {
  const auto g = single_gaussian({0.0, 0.0}, {1.0, 1.0});
  const Vec e = g.noise_prediction(Vec{1.0, 0.0}, 1.0);
  CHECK(e[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(e[1] == 0.0);
  const Vec s = g.score(Vec{1.0, 0.0}, 1.0);
  CHECK(s[0] == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("symmetric pair cancels at the origin") {
  const GaussianMixture g(2, {{0.5, {1.0, 0.0}, {1.0, 1.0}}, {0.5, {-1.0, 0.0}, {1.0, 1.0}}});
  for (double t : {0.01, 0.5, 3.0, 80.0}) {
    const Vec e = g.noise_prediction(Vec{0.0, 0.0}, t);
    CHECK(std::abs(e[0]) < 1e-15);
    CHECK(std::abs(e[1]) < 1e-15);
  }
}

TEST_CASE("pinned mixture value") {
  const auto g = pinned_mixture();
  const Vec x{0.5, 0.5};
  const Vec e = g.noise_prediction(x, 0.5);
  // frozen from a 50-digit evaluation of the same finite-difference oracle
  CHECK(e[0] == doctest::Approx(-0.15509107231020517).epsilon(1e-14));
  CHECK(e[1] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(rel_diff(e, fd_noise(g, x, 0.5)) < 1e-8);
}

TEST_CASE("score matches finite differences on random mixtures") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const auto g = testutil::random_gmm(rng);
    const Vec x = testutil::random_vec(rng, g.dim(), 2.0);
    const double t = std::exp(testutil::uniform(rng, std::log(0.3), std::log(5.0)));
    CHECK(rel_diff(g.noise_prediction(x, t), fd_noise(g, x, t), 1e-3) < 1e-6);
  }
}

TEST_CASE("noise prediction is -t * score") {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    const auto g = testutil::random_gmm(rng);
    const Vec x = testutil::random_vec(rng, g.dim(), 10.0);
    const double t = std::exp(testutil::uniform(rng, std::log(0.002), std::log(80.0)));
    Vec s = g.score(x, t);
    for (double& v : s) v *= -t;
    CHECK(rel_diff(g.noise_prediction(x, t), s, 1e-300) <= 1e-12);
  }
}

TEST_CASE("responsibilities stay finite far from the data") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 50; ++i) {
    const auto g = testutil::random_gmm(rng, 3);
    for (double scale : {1e3, 1e6}) {
      const Vec x = testutil::random_vec(rng, 3, scale);
      for (double t : {1e-3, 1.0, 1e3}) {
        const Vec gamma = g.responsibilities(x, t);
        double sum = 0.0;
        for (double v : gamma) {
          CHECK(std::isfinite(v));
          sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        for (double v : g.noise_prediction(x, t)) CHECK(std::isfinite(v));
        CHECK(std::isfinite(g.log_density(x, t)));
      }
    }
  }
}

TEST_CASE("invalid models and arguments") {
  CHECK_THROWS_AS(GaussianMixture(2, {{0.5, {0.0, 0.0}, {1.0, 1.0}}}), InvalidArgument);
  CHECK_THROWS_AS(GaussianMixture(2, {{1.0, {0.0, 0.0}, {1.0, 0.0}}}), InvalidArgument);
  CHECK_THROWS_AS(GaussianMixture(2, {{1.0, {0.0}, {1.0, 1.0}}}), InvalidArgument);
  CHECK_THROWS_AS(GaussianMixture(2, {}), InvalidArgument);
  const auto g = single_gaussian({0.0, 0.0}, {1.0, 1.0});
  CHECK_THROWS_AS(g.noise_prediction(Vec{1.0}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(g.noise_prediction(Vec{1.0, 0.0}, 0.0), InvalidArgument);
  CHECK_THROWS_AS(g.noise_prediction(Vec{1.0, 0.0}, -1.0), InvalidArgument);
}

TEST_CASE("json round trip") {
  const auto g = default_gmm();
  const auto back = GaussianMixture::from_json(g.to_json());
  CHECK(back.to_json() == g.to_json());
  CHECK_THROWS_AS(GaussianMixture::from_json(nlohmann::json{{"dim", 2}}), InvalidArgument);
  const auto file = load_gmm(EPD_SOURCE_DIR "/configs/gmm_default.json");
  CHECK(file.to_json() == g.to_json());
}

TEST_CASE("closed form flow examples") {
  const Vec mean{0.0, 0.0}, var{1.0, 1.0};
  const Vec y = closed_form_flow(mean, var, Vec{2.0, 0.0}, 3.0, 1.0);
  CHECK(y[0] == doctest::Approx(0.89442719099991588).epsilon(1e-15));
  CHECK(y[1] == 0.0);
  const Vec x{0.3, -1.2};
  CHECK(closed_form_flow(mean, var, x, 2.0, 2.0) == x);
  CHECK(closed_form_flow(Vec{0.3, -1.2}, var, x, 5.0, 0.1) == x);
  CHECK_THROWS_AS(closed_form_flow(mean, var, x, 0.0, 1.0), InvalidArgument);
}

TEST_CASE("closed form flow agrees with fine Euler integration") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec mean = testutil::random_vec(rng, 2, 1.0);
    const Vec var{testutil::uniform(rng, 0.1, 2.0), testutil::uniform(rng, 0.1, 2.0)};
    const auto g = single_gaussian(mean, var);
    const Vec x0 = testutil::random_vec(rng, 2, 80.0);
    const std::size_t steps = 10000;
    const double lo = std::log(0.01), hi = std::log(80.0);
    Vec x = x0;
    for (std::size_t i = steps; i > 0; --i) {
      const double t_cur = std::exp(lo + (hi - lo) * double(i) / double(steps));
      const double t_next = std::exp(lo + (hi - lo) * double(i - 1) / double(steps));
      x = axpy(x, t_next - t_cur, g.noise_prediction(x, t_cur));
    }
    const Vec exact = closed_form_flow(mean, var, x0, 80.0, 0.01);
    Vec disp(2);
    for (int d = 0; d < 2; ++d) disp[d] = x0[d] - mean[d];
    // error relative to the distance the flow has to cover
    double err = 0.0;
    for (int d = 0; d < 2; ++d) err = std::max(err, std::abs(x[d] - exact[d]));
    CHECK(err / testutil::max_abs(disp) <= 1e-4);
  }
}

TEST_CASE("sample_initial") {
  std::mt19937_64 a(5), b(5);
  const auto xs = sample_initial(a, 80.0, 2, 3);
  CHECK(xs.size() == 3);
  CHECK(xs == sample_initial(b, 80.0, 2, 3));
  CHECK(sample_initial(a, 80.0, 2, 0).empty());

  std::mt19937_64 rng(6);
  const auto many = sample_initial(rng, 80.0, 2, 100000);
  for (int d = 0; d < 2; ++d) {
    double ss = 0.0;
    for (const auto& v : many) ss += v[d] * v[d];
    CHECK(std::sqrt(ss / double(many.size())) == doctest::Approx(80.0).epsilon(0.01));
  }
}

TEST_CASE("cost wrapper is value transparent") {
  const auto base = std::make_shared<GaussianMixture>(default_gmm());
  const auto zero = with_cost(base, 0);
  const auto twice = with_cost(with_cost(base, 1000), 1000);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    const Vec x = testutil::random_vec(rng, 2, 5.0);
    const double t = testutil::uniform(rng, 0.01, 80.0);
    CHECK(zero->noise_prediction(x, t) == base->noise_prediction(x, t));
    CHECK(twice->noise_prediction(x, t) == base->noise_prediction(x, t));
  }
  for (CostMode mode : {CostMode::busy, CostMode::blocking}) {
    const auto slow = with_cost(base, 10'000'000, mode);
    const auto t0 = std::chrono::steady_clock::now();
    slow->noise_prediction(Vec{0.0, 0.0}, 1.0);
    CHECK(std::chrono::steady_clock::now() - t0 >= std::chrono::milliseconds(10));
  }
}

TEST_CASE("counting oracle") {
  const auto base = std::make_shared<GaussianMixture>(default_gmm());
  CountingOracle c(base);
  c.noise_prediction(Vec{0.0, 0.0}, 1.0);
  c.noise_prediction(Vec{0.0, 0.0}, 2.0);
  CHECK(c.calls() == 2);
  c.reset();
  CHECK(c.calls() == 0);
}
