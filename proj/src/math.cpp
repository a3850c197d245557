#include "drhmc/math.hpp"

#include <algorithm>
#include <numbers>

namespace drhmc {

double square(double x) { return x * x; }

double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (a == -kInf) return -kInf;
  return a + std::log1p(std::exp(b - a));
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -kInf;
  const double m = *std::max_element(values.begin(), values.end());
  if (m == -kInf) return -kInf;
  if (m == kInf) return kInf;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

double log1m_exp(double x) {
  if (x > 0.0 || std::isnan(x)) return kNaN;
  if (x == 0.0) return -kInf;
  // Maechler's two-branch form
  if (x > -std::numbers::ln2) return std::log(-std::expm1(x));
  return std::log1p(-std::exp(x));
}

double normal_log_density(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrtTwoPi;
}

double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

double half_cauchy_log_density(double x, double scale) {
  if (x < 0.0) return -kInf;
  return std::log(2.0) - kLogPi - std::log(scale) - std::log1p(square(x / scale));
}

double cauchy_log_density(double x, double location, double scale) {
  return -kLogPi - std::log(scale) - std::log1p(square((x - location) / scale));
}

double log1m_tanh_sq(double z) {
  // 1 - tanh^2 z = 4 e^{-2|z|} / (1 + e^{-2|z|})^2
  const double az = std::abs(z);
  return std::log(4.0) - 2.0 * az - 2.0 * std::log1p(std::exp(-2.0 * az));
}

}  // namespace drhmc
