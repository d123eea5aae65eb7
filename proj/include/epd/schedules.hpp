#pragma once

#include <ostream>
#include <string>
#include <string_view>

#include "epd/types.hpp"

namespace epd {

enum class ScheduleKind { polynomial, time_uniform, logsnr };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

inline constexpr double kDefaultTMin = 0.002;
inline constexpr double kDefaultTMax = 80.0;
inline constexpr double kDefaultRho = 7.0;

/// Sampling times t_0 = t_min < ... < t_N = t_max. Solvers visit them in
/// reverse, from times.back() down to times.front().
struct TimeSchedule {
  ScheduleKind kind = ScheduleKind::polynomial;
  double rho = kDefaultRho;
  Vec times;

  std::size_t steps() const { return times.size() - 1; }
  double t_min() const { return times.front(); }
  double t_max() const { return times.back(); }
};

/// polynomial:   t_j = (t_min^(1/rho) + j/N (t_max^(1/rho) - t_min^(1/rho)))^rho
/// time_uniform: linear in t
/// logsnr:       uniform in log t (logSNR = -2 log t when sigma(t) = t)
TimeSchedule build_schedule(ScheduleKind kind, std::size_t steps, double t_min = kDefaultTMin,
                            double t_max = kDefaultTMax, double rho = kDefaultRho);

/// Inserts `inserted` points between every pair of adjacent times, uniformly
/// in the family's warp coordinate. Every original time is kept bit-exactly.
TimeSchedule refine_for_teacher(const TimeSchedule& schedule, std::size_t inserted);

/// Single CSV column "t", ascending.
void write_schedule_csv(std::ostream& out, const TimeSchedule& schedule);

}  // namespace epd
