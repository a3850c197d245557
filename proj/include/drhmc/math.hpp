#pragma once

#include <cmath>
#include <limits>
#include <span>

#include <Eigen/Core>

namespace drhmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kLogSqrtTwoPi = 0.91893853320467274178;
inline constexpr double kLogPi = 1.14472988584940017414;

// log(exp(a) + exp(b))
double log_add_exp(double a, double b);
double log_sum_exp(std::span<const double> values);

// log(1 - exp(x)) for x <= 0; -inf at x == 0.
double log1m_exp(double x);

double normal_log_density(double x, double mean, double sd);
double normal_cdf(double x, double mean = 0.0, double sd = 1.0);

// log of the half-Cauchy(0, scale) density on x > 0, normalization included.
double half_cauchy_log_density(double x, double scale);
double cauchy_log_density(double x, double location, double scale);

// log(1 - tanh(z)^2), stable for large |z|.
double log1m_tanh_sq(double z);

double square(double x);

}  // namespace drhmc
