#pragma once

#include <span>

namespace tmeval {

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_std(std::span<const double> xs);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  /// Direction only: mean(a) < mean(b). Combine with p_value for significance.
  bool a_is_smaller = false;
};

/// Two-sided Welch t-test for a difference in means. When both samples have
/// zero variance the statistic is 0 with p = 1 for equal means, and +-inf with
/// p = 0 otherwise. Each sample needs at least two values.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace tmeval
