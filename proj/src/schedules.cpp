#include "epd/schedules.hpp"

#include <cmath>
#include <iomanip>

namespace epd {

namespace {

// Map to/from the coordinate in which the family is uniform.
double warp(ScheduleKind kind, double rho, double t) {
  switch (kind) {
    case ScheduleKind::polynomial: return std::pow(t, 1.0 / rho);
    case ScheduleKind::time_uniform: return t;
    case ScheduleKind::logsnr: return std::log(t);
  }
  return t;
}

double unwarp(ScheduleKind kind, double rho, double u) {
  switch (kind) {
    case ScheduleKind::polynomial: return std::pow(u, rho);
    case ScheduleKind::time_uniform: return u;
    case ScheduleKind::logsnr: return std::exp(u);
  }
  return u;
}

}  // namespace

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::polynomial: return "polynomial";
    case ScheduleKind::time_uniform: return "time_uniform";
    case ScheduleKind::logsnr: return "logsnr";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "polynomial" || name == "edm") return ScheduleKind::polynomial;
  if (name == "time_uniform" || name == "uniform") return ScheduleKind::time_uniform;
  if (name == "logsnr") return ScheduleKind::logsnr;
  throw InvalidArgument("unknown schedule kind '" + std::string(name) + "'");
}

TimeSchedule build_schedule(ScheduleKind kind, std::size_t steps, double t_min, double t_max, double rho) {
  if (steps < 1) throw InvalidArgument("schedule: at least one step required");
  if (!(t_min > 0.0) || !(t_max > t_min) || !std::isfinite(t_max))
    throw InvalidArgument("schedule: require 0 < t_min < t_max");
  if (kind == ScheduleKind::polynomial && !(rho > 0.0))
    throw InvalidArgument("schedule: rho must be positive");

  TimeSchedule s{kind, rho, Vec(steps + 1)};
  const double lo = warp(kind, rho, t_min);
  const double hi = warp(kind, rho, t_max);
  for (std::size_t j = 0; j <= steps; ++j) {
    const double frac = static_cast<double>(j) / static_cast<double>(steps);
    s.times[j] = unwarp(kind, rho, lo + frac * (hi - lo));
  }
  s.times.front() = t_min;
  s.times.back() = t_max;
  return s;
}

TimeSchedule refine_for_teacher(const TimeSchedule& schedule, std::size_t inserted) {
  if (inserted == 0) return schedule;
  const std::size_t n = schedule.steps();
  TimeSchedule out{schedule.kind, schedule.rho, {}};
  out.times.reserve(n * (inserted + 1) + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = schedule.times[i];
    const double b = schedule.times[i + 1];
    const double ua = warp(schedule.kind, schedule.rho, a);
    const double ub = warp(schedule.kind, schedule.rho, b);
    out.times.push_back(a);
    for (std::size_t m = 1; m <= inserted; ++m) {
      const double frac = static_cast<double>(m) / static_cast<double>(inserted + 1);
      out.times.push_back(unwarp(schedule.kind, schedule.rho, ua + frac * (ub - ua)));
    }
  }
  out.times.push_back(schedule.times.back());
  return out;
}

void write_schedule_csv(std::ostream& out, const TimeSchedule& schedule) {
  out << "t\n" << std::setprecision(17);
  for (double t : schedule.times) out << t << '\n';
}

}  // namespace epd
