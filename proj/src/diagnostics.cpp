#include "drhmc/diagnostics.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace drhmc {

EssEstimate autocorr_ess(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 10) throw std::invalid_argument("autocorr_ess: need at least 10 values");
  for (double v : values)
    if (!std::isfinite(v)) throw std::invalid_argument("autocorr_ess: non-finite value");

  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = values[i] - mean;

  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n);
  };

  EssEstimate out;
  const double c0 = autocov(0);
  if (!(c0 > 0.0) || c0 < 1e-300) return out;

  double pair_sum = 0.0;
  std::size_t lag = 0;
  while (lag + 1 < n) {
    const double gamma = (autocov(lag) + autocov(lag + 1)) / c0;
    if (!(gamma > 0.0)) break;
    pair_sum += gamma;
    lag += 2;
  }
  out.max_lag = lag == 0 ? 0 : static_cast<long>(lag) - 1;
  const double tau = -1.0 + 2.0 * pair_sum;
  const double nd = static_cast<double>(n);
  out.ess = tau > 0.0 ? std::min(nd, nd / tau) : nd;
  out.defined = true;
  return out;
}

ErrorEss error_based_ess(std::span<const double> per_chain_estimates, double true_mean, double true_sd) {
  if (per_chain_estimates.size() < 8) throw std::invalid_argument("error_based_ess: need at least 8 chains");
  if (!(true_sd > 0.0)) throw std::invalid_argument("error_based_ess: true_sd must be > 0");
  ErrorEss out;
  double sq = 0.0;
  const double first = per_chain_estimates[0];
  out.zero_spread = true;
  for (double e : per_chain_estimates) {
    sq += square(e - true_mean);
    if (e != first) out.zero_spread = false;
  }
  out.se = std::sqrt(sq / static_cast<double>(per_chain_estimates.size()));
  if (out.se == 0.0) {
    out.infinite = true;
    out.ess = kInf;
  } else {
    out.ess = square(true_sd / out.se);
  }
  return out;
}

std::optional<double> cost_per_ess(double n_evals, double ess) {
  if (!(ess > 0.0) || !std::isfinite(ess)) return std::nullopt;
  return n_evals / ess;
}

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.18) {
    // P(K <= l) = sqrt(2 pi)/l * sum exp(-(2j-1)^2 pi^2 / (8 l^2))
    const double c = -std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int j = 1; j <= 20; ++j) s += std::exp(c * square(2.0 * j - 1.0));
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    s += (j % 2 == 1 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

namespace {

KsResult ks_core(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  KsResult out;
  out.n = x.size();
  out.statistic = d;
  const double rn = std::sqrt(n);
  out.p_value = kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d);
  out.defined = true;
  return out;
}

}  // namespace

KsResult ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.size() < 100) throw std::invalid_argument("ks_statistic: need at least 100 samples");
  return ks_core(std::vector<double>(samples.begin(), samples.end()), cdf);
}

KsResult ks_tail(std::span<const double> samples, const std::function<double(double)>& cdf, double threshold) {
  if (!(threshold >= 0.0)) throw std::invalid_argument("ks_tail: threshold must be >= 0");
  std::vector<double> tail;
  for (double v : samples)
    if (std::abs(v) > threshold) tail.push_back(v);
  const double lower = cdf(-threshold);
  const double upper = 1.0 - cdf(threshold);
  const double mass = lower + upper;
  if (tail.empty() || !(mass > 0.0)) return KsResult{};
  auto conditional = [&](double v) {
    if (v < -threshold) return cdf(v) / mass;
    if (v <= threshold) return lower / mass;
    return (lower + cdf(v) - cdf(threshold)) / mass;
  };
  return ks_core(std::move(tail), conditional);
}

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) return kNaN;
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapResult bootstrap_over_chains(std::size_t n_chains, int B, Rng& rng,
                                      const std::function<double(std::span<const std::size_t>)>& statistic) {
  if (n_chains < 8) throw std::invalid_argument("bootstrap: need at least 8 chains");
  if (B < 200) throw std::invalid_argument("bootstrap: need at least 200 resamples");
  std::uniform_int_distribution<std::size_t> pick(0, n_chains - 1);
  std::vector<std::size_t> idx(n_chains);
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    for (auto& i : idx) i = pick(rng);
    const double s = statistic(idx);
    if (std::isfinite(s)) stats.push_back(s);
  }
  BootstrapResult out;
  out.resamples = B;
  out.usable = static_cast<int>(stats.size());
  if (stats.empty()) return out;
  std::sort(stats.begin(), stats.end());
  double sum = 0.0;
  for (double s : stats) sum += s;
  out.mean = sum / static_cast<double>(stats.size());
  out.lo = quantile_sorted(stats, 0.16);
  out.hi = quantile_sorted(stats, 0.84);
  return out;
}

}  // namespace drhmc
