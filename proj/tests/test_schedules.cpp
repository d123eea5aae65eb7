#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "epd/schedules.hpp"
#include "test_util.hpp"

using namespace epd;

TEST_CASE("endpoints are exact") {
  for (auto kind : {ScheduleKind::polynomial, ScheduleKind::time_uniform, ScheduleKind::logsnr})
    for (std::size_t n : {1, 2, 5, 17}) {
      const auto s = build_schedule(kind, n, 0.002, 80.0);
      CHECK(s.times.size() == n + 1);
      CHECK(s.t_min() == 0.002);
      CHECK(s.t_max() == 80.0);
      CHECK(s.steps() == n);
    }
}

TEST_CASE("polynomial interior point") {
  const auto s = build_schedule(ScheduleKind::polynomial, 2, 0.002, 80.0, 7.0);
  // 40-digit evaluation of the closed formula: 2.5152189761471585788
  CHECK(s.times[1] == doctest::Approx(2.5152189761471586).epsilon(1e-13));
}

TEST_CASE("logsnr midpoint is the geometric mean") {
  const auto s = build_schedule(ScheduleKind::logsnr, 2, 0.01, 100.0);
  CHECK(s.times[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("rho = 1 equals time_uniform") {
  for (std::size_t n : {1, 3, 8, 33}) {
    const auto p = build_schedule(ScheduleKind::polynomial, n, 0.002, 80.0, 1.0);
    const auto u = build_schedule(ScheduleKind::time_uniform, n, 0.002, 80.0);
    CHECK(p.times == u.times);
  }
}

TEST_CASE("strictly increasing for random arguments") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    const double t_min = std::exp(testutil::uniform(rng, std::log(1e-4), std::log(1.0)));
    const double t_max = t_min * std::exp(testutil::uniform(rng, 0.01, 12.0));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
    const double rho = testutil::uniform(rng, 0.5, 10.0);
    for (auto kind : {ScheduleKind::polynomial, ScheduleKind::time_uniform, ScheduleKind::logsnr}) {
      const auto s = build_schedule(kind, n, t_min, t_max, rho);
      for (std::size_t j = 0; j + 1 < s.times.size(); ++j) REQUIRE(s.times[j] < s.times[j + 1]);
    }
  }
}

TEST_CASE("invalid arguments") {
  CHECK_THROWS_AS(build_schedule(ScheduleKind::polynomial, 0), InvalidArgument);
  CHECK_THROWS_AS(build_schedule(ScheduleKind::polynomial, 3, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(build_schedule(ScheduleKind::polynomial, 3, 0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(build_schedule(ScheduleKind::polynomial, 3, 0.1, 1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(parse_schedule_kind("cosine"), InvalidArgument);
  CHECK(parse_schedule_kind("logsnr") == ScheduleKind::logsnr);
}

TEST_CASE("teacher refinement") {
  const auto s = build_schedule(ScheduleKind::polynomial, 3);
  CHECK(refine_for_teacher(s, 0).times == s.times);

  const auto fine = refine_for_teacher(s, 6);
  CHECK(fine.times.size() == 22);
  for (std::size_t j = 0; j <= 3; ++j) CHECK(fine.times[j * 7] == s.times[j]);
  for (std::size_t j = 0; j + 1 < fine.times.size(); ++j) CHECK(fine.times[j] < fine.times[j + 1]);

  TimeSchedule pair{ScheduleKind::time_uniform, 1.0, {1.0, 3.0}};
  const auto mid = refine_for_teacher(pair, 1);
  CHECK(mid.times == Vec{1.0, 2.0, 3.0});

  // polynomial insertion is uniform in t^(1/rho)
  const auto warped = refine_for_teacher(build_schedule(ScheduleKind::polynomial, 1, 0.002, 80.0), 1);
  CHECK(warped.times[1] == doctest::Approx(2.5152189761471586).epsilon(1e-13));

  // logsnr insertion is geometric
  const auto g = refine_for_teacher(build_schedule(ScheduleKind::logsnr, 1, 0.01, 100.0), 3);
  CHECK(g.times[2] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("refined schedule is a superset for random inputs") {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    const std::size_t m = std::uniform_int_distribution<std::size_t>(0, 9)(rng);
    const auto kind = static_cast<ScheduleKind>(i % 3);
    const auto s = build_schedule(kind, n);
    const auto f = refine_for_teacher(s, m);
    REQUIRE(f.times.size() == n * (m + 1) + 1);
    for (std::size_t j = 0; j <= n; ++j) CHECK(f.times[j * (m + 1)] == s.times[j]);
  }
}

TEST_CASE("csv export") {
  std::ostringstream out;
  write_schedule_csv(out, build_schedule(ScheduleKind::logsnr, 2, 0.01, 100.0));
  const std::string text = out.str();
  CHECK(text.rfind("t\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
