#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "drhmc/math.hpp"
#include "drhmc/random.hpp"

namespace drhmc {

struct EssEstimate {
  double ess = kNaN;
  bool defined = false;  // false for a zero-variance series
  long max_lag = 0;      // last lag included by the truncation rule
};

/// N / (1 + 2 sum rho_t) from direct autocovariances (divisor N), truncated by
/// Geyer's initial positive sequence on pair sums rho_{2m} + rho_{2m+1}.
/// Capped at N. Requires at least 10 finite values.
EssEstimate autocorr_ess(std::span<const double> values);

struct ErrorEss {
  double ess = kNaN;         // per chain, (true_sd / se)^2
  double se = kNaN;          // RMS of (estimate - true_mean) across chains
  bool infinite = false;     // se == 0
  bool zero_spread = false;  // all chain estimates identical
};

/// Error-based ESS from per-chain estimates of a moment with known mean and
/// sd. Refuses fewer than 8 chains.
ErrorEss error_based_ess(std::span<const double> per_chain_estimates, double true_mean, double true_sd);

/// n_evals / ess; empty when ess is not a positive finite number.
std::optional<double> cost_per_ess(double n_evals, double ess);

struct KsResult {
  double statistic = kNaN;
  double p_value = kNaN;
  std::size_t n = 0;
  bool defined = false;
};

/// Upper tail of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_survival(double lambda);

/// One-sample KS test; requires at least 100 samples. The p-value uses the
/// asymptotic series at the effective argument (sqrt(n) + 0.12 + 0.11/sqrt(n)) D.
KsResult ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

/// KS restricted to |x| > threshold, comparing against the reference
/// conditioned on the same region. Undefined when no sample falls there.
KsResult ks_tail(std::span<const double> samples, const std::function<double(double)>& cdf, double threshold);

struct BootstrapResult {
  double mean = kNaN;
  double lo = kNaN;  // 16th percentile
  double hi = kNaN;  // 84th percentile
  int resamples = 0;
  int usable = 0;  // resamples whose statistic was finite
};

/// Resamples chain indices with replacement B times and summarizes the
/// statistic. Requires at least 8 chains and B >= 200.
BootstrapResult bootstrap_over_chains(std::size_t n_chains, int B, Rng& rng,
                                      const std::function<double(std::span<const std::size_t>)>& statistic);

/// Linear-interpolation quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double prob);

}  // namespace drhmc
