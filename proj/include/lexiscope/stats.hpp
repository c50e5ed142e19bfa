#pragma once

#include <cstddef>
#include <span>

namespace lexiscope {

enum class Direction { Greater, Less };

struct TTestResult {
  int layer = 0;
  double t_stat = 0.0;
  double df = 0.0;
  double p_greater = 0.5;  // H1: mean(a) > mean(b)
  double p_less = 0.5;     // H1: mean(a) < mean(b)
  std::size_t n_a = 0;
  std::size_t n_b = 0;

  double p(Direction d) const { return d == Direction::Greater ? p_greater : p_less; }
};

/// Welch t statistic with Welch-Satterthwaite degrees of freedom; both
/// one-sided p-values from the Student-t distribution. Throws
/// DegenerateSample when a sample has fewer than two values or both
/// variances are zero.
TTestResult one_sided_t_test(std::span<const double> a, std::span<const double> b, int layer = 0);

double mean(std::span<const double> x);

}  // namespace lexiscope
