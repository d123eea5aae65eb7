#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace epd {

using Vec = std::vector<double>;

// Raised for any precondition violation on public entry points
// (dimension mismatch, non-positive time, malformed file, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// x + a * d, elementwise.
[[nodiscard]] inline Vec axpy(std::span<const double> x, double a, std::span<const double> d) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + a * d[i];
  return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = a[i] - b[i];
    s += e * e;
  }
  return s;
}

}  // namespace epd
