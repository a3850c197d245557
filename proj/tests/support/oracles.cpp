#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oracle {

double simpson(const std::function<double(double)>& f, double lo, double hi, int intervals) {
  if (intervals % 2) ++intervals;
  const double h = (hi - lo) / intervals;
  double s = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return s * h / 3.0;
}

double log_density(const drhmc::TargetModel& model, const Vec& q, Vec* grad) {
  drhmc::Vector qv = Eigen::Map<const drhmc::Vector>(q.data(), static_cast<drhmc::Index>(q.size()));
  drhmc::Vector g;
  const double lp = model.log_density_gradient(qv, g);
  if (grad) grad->assign(g.data(), g.data() + g.size());
  return lp;
}

double log_joint(const drhmc::TargetModel& model, const State& s, const Vec& minv) {
  double ke = 0.0;
  for (std::size_t i = 0; i < s.p.size(); ++i) ke += 0.5 * s.p[i] * s.p[i] * minv[i];
  const double lp = log_density(model, s.q);
  if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
  return lp - ke;
}

State flow(const drhmc::TargetModel& model, State s, double eps, long n, const Vec& minv) {
  const std::size_t d = s.q.size();
  Vec g;
  for (long step = 0; step < n; ++step) {
    log_density(model, s.q, &g);
    for (std::size_t i = 0; i < d; ++i) s.p[i] += 0.5 * eps * g[i];
    for (std::size_t i = 0; i < d; ++i) s.q[i] += eps * minv[i] * s.p[i];
    const double lp = log_density(model, s.q, &g);
    for (std::size_t i = 0; i < d; ++i) s.p[i] += 0.5 * eps * g[i];
    bool finite = std::isfinite(lp);
    for (std::size_t i = 0; i < d; ++i) finite = finite && std::isfinite(s.q[i]) && std::isfinite(s.p[i]);
    if (!finite) break;
  }
  for (auto& v : s.p) v = -v;
  return s;
}

State stage_map(const drhmc::TargetModel& model, const State& s, double eps, long n, int a, int k,
                const Vec& minv) {
  const double scale = std::pow(static_cast<double>(a), k - 1);
  return flow(model, s, eps / scale, n * static_cast<long>(scale), minv);
}

namespace {

// Probability-space acceptance with divergence handling.
struct Ctx {
  const drhmc::TargetModel& model;
  double eps;
  long n;
  int a;
  const Vec& minv;
  const RetryFn* retry;

  State F(const State& s, int k) const { return stage_map(model, s, eps, n, a, k, minv); }
  double lj(const State& s) const { return log_joint(model, s, minv); }
  static bool divergent(double lx, double ly) { return !std::isfinite(ly) || lx - ly > 1000.0; }
  double r(double alpha) const { return retry ? (*retry)(alpha) : 1.0; }

  // alpha_1 at s given its image
  double alpha1(const State& s, const State& y) const {
    const double lx = lj(s), ly = lj(y);
    if (divergent(lx, ly)) return 0.0;
    return std::min(1.0, std::exp(ly - lx));
  }
};

// min(1, num / den), with a zero numerator winning over a zero denominator
double ratio(double num, double den) {
  if (num == 0.0) return 0.0;
  return den == 0.0 ? 1.0 : std::min(1.0, num / den);
}

}  // namespace

double brute_force_alpha(const drhmc::TargetModel& model, const State& x, double eps, long n, int a, int k,
                         const Vec& minv, const RetryFn* retry) {
  Ctx c{model, eps, n, a, minv, retry};
  const double lx = c.lj(x);
  if (k == 2) {
    const State y1 = c.F(x, 1);
    const State y2 = c.F(x, 2);
    const State g = c.F(y2, 1);
    const double ly = c.lj(y2);
    if (Ctx::divergent(lx, ly)) return 0.0;
    const double a1x = c.alpha1(x, y1);
    const double a1y = c.alpha1(y2, g);
    const double num = std::exp(ly - lx) * (1.0 - a1y) * c.r(a1y);
    const double den = (1.0 - a1x) * c.r(a1x);
    return ratio(num, den);
  }
  if (k == 3) {
    // the eight points
    const State f1 = c.F(x, 1);
    const State f2 = c.F(x, 2);
    const State f1f2 = c.F(f2, 1);
    const State y = c.F(x, 3);
    const State f1y = c.F(y, 1);
    const State f2y = c.F(y, 2);
    const State f1f2y = c.F(f2y, 1);
    const double ly = c.lj(y);
    if (Ctx::divergent(lx, ly)) return 0.0;

    auto alpha2 = [&](const State& s, const State& s1, const State& s2, const State& s12) {
      const double ls = c.lj(s), l2 = c.lj(s2);
      if (Ctx::divergent(ls, l2)) return 0.0;
      const double a1s = c.alpha1(s, s1);
      const double a1s2 = c.alpha1(s2, s12);
      const double num = std::exp(l2 - ls) * (1.0 - a1s2) * c.r(a1s2);
      const double den = (1.0 - a1s) * c.r(a1s);
      return ratio(num, den);
    };
    const double a1x = c.alpha1(x, f1);
    const double a2x = alpha2(x, f1, f2, f1f2);
    const double a1y = c.alpha1(y, f1y);
    const double a2y = alpha2(y, f1y, f2y, f1f2y);
    const double num = std::exp(ly - lx) * (1.0 - a1y) * (1.0 - a2y) * c.r(a1y) * c.r(a2y);
    const double den = (1.0 - a1x) * (1.0 - a2x) * c.r(a1x) * c.r(a2x);
    return ratio(num, den);
  }
  throw std::invalid_argument("brute_force_alpha: k must be 2 or 3");
}

long expected_leapfrogs(long n, int a, int k) {
  long total = 0;
  long a_pow = 1;
  for (int j = 1; j <= k; ++j) {
    total += (1L << (k - j)) * n * a_pow;
    a_pow *= a;
  }
  return total;
}

Vec ar1_series(drhmc::Rng& rng, std::size_t n, double rho) {
  Vec x(n);
  std::normal_distribution<double> z(0.0, 1.0);
  x[0] = z(rng);
  const double s = std::sqrt(1.0 - rho * rho);
  for (std::size_t t = 1; t < n; ++t) x[t] = rho * x[t - 1] + s * z(rng);
  return x;
}

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace oracle
