#pragma once

#include <span>

namespace rulesim {

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_std(std::span<const double> xs);
double median(std::span<const double> xs);

struct TTest {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;  // two-sided
};

/// Two-sample Student t-test with pooled variance. Needs n >= 2 per group.
TTest student_t_test(std::span<const double> a, std::span<const double> b);
/// Welch's unequal-variance variant.
TTest welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace rulesim
