#include "rulesim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "rulesim/errors.hpp"

namespace rulesim {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw DegenerateInputError("mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double median(std::span<const double> xs) {
  if (xs.empty()) throw DegenerateInputError("median of an empty sample");
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

TTest finish(double t, double dof) {
  TTest out;
  out.statistic = t;
  out.dof = dof;
  if (!std::isfinite(t)) {
    out.p_value = std::isnan(t) ? 1.0 : 0.0;
    return out;
  }
  const boost::math::students_t dist(dof);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return out;
}

void require_pairs(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DegenerateInputError("t-test needs at least two values per group");
}

}  // namespace

TTest student_t_test(std::span<const double> a, std::span<const double> b) {
  require_pairs(a, b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = std::pow(sample_std(a), 2), vb = std::pow(sample_std(b), 2);
  const double dof = na + nb - 2.0;
  const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / dof;
  const double diff = mean(a) - mean(b);
  const double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  if (se == 0.0) return finish(diff == 0.0 ? std::nan("") : std::copysign(INFINITY, diff), dof);
  return finish(diff / se, dof);
}

TTest welch_t_test(std::span<const double> a, std::span<const double> b) {
  require_pairs(a, b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double qa = std::pow(sample_std(a), 2) / na, qb = std::pow(sample_std(b), 2) / nb;
  const double diff = mean(a) - mean(b);
  const double se = std::sqrt(qa + qb);
  if (se == 0.0) return finish(diff == 0.0 ? std::nan("") : std::copysign(INFINITY, diff), na + nb - 2.0);
  const double dof = (qa + qb) * (qa + qb) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  return finish(diff / se, dof);
}

}  // namespace rulesim
