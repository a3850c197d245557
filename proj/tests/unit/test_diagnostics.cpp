#include <doctest.h>

#include <algorithm>

#include "drhmc/diagnostics.hpp"
#include "drhmc/models/funnel.hpp"
#include "oracles.hpp"

using namespace drhmc;

namespace {

std::vector<double> normals(Rng& rng, std::size_t n, double mean = 0.0, double sd = 1.0) {
  std::vector<double> x(n);
  for (auto& v : x) v = mean + sd * standard_normal(rng);
  return x;
}

}  // namespace

TEST_CASE("autocorrelation ESS of white noise is about N") {
  Rng rng(1);
  const auto x = normals(rng, 100000);
  const auto e = autocorr_ess(x);
  REQUIRE(e.defined);
  CHECK(e.ess / 1e5 >= 0.9);
  CHECK(e.ess / 1e5 <= 1.0);  // capped at N
}

TEST_CASE("autocorrelation ESS of AR(1) matches N(1-rho)/(1+rho)") {
  Rng rng(2);
  for (double rho : {0.5, 0.9}) {
    const auto x = oracle::ar1_series(rng, 100000, rho);
    const double expected = 1e5 * (1 - rho) / (1 + rho);
    CHECK(autocorr_ess(x).ess == doctest::Approx(expected).epsilon(0.1));
  }
}

TEST_CASE("autocorrelation ESS edge cases") {
  const std::vector<double> flat(500, 3.0);
  CHECK_FALSE(autocorr_ess(flat).defined);
  const std::vector<double> few{1, 2, 3};
  CHECK_THROWS(autocorr_ess(few));

  Rng rng(3);
  const auto x = oracle::ar1_series(rng, 5000, 0.7);
  std::vector<double> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [](double v) { return -3.5 * v + 12.0; });
  CHECK(autocorr_ess(y).ess == doctest::Approx(autocorr_ess(x).ess).epsilon(1e-9));

  // alternating series is anti-correlated; the estimate never exceeds N
  std::vector<double> alt(1000);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 ? 1.0 : -1.0;
  const auto ea = autocorr_ess(alt);
  CHECK(ea.ess <= 1000.0);
  CHECK(ea.ess > 0.0);
}

TEST_CASE("error-based ESS on iid chains recovers N") {
  Rng rng(4);
  const std::size_t n = 2000;
  std::vector<double> est;
  for (int c = 0; c < 50; ++c) {
    const auto x = normals(rng, n, 1.0, 2.0);
    double m = 0.0;
    for (double v : x) m += v;
    est.push_back(m / n);
  }
  const auto e = error_based_ess(est, 1.0, 2.0);
  CHECK(e.ess == doctest::Approx(double(n)).epsilon(0.25));
  CHECK_FALSE(e.infinite);

  const std::vector<double> exact(10, 1.0);
  const auto inf = error_based_ess(exact, 1.0, 2.0);
  CHECK(inf.infinite);
  CHECK(inf.ess == kInf);
  CHECK_THROWS(error_based_ess(std::vector<double>(7, 0.5), 0.0, 1.0));
}

TEST_CASE("error-based ESS validates on exact funnel draws") {
  Rng rng(5);
  const Index n = 1000;
  std::vector<double> est;
  // 200 chains keep the spread of the ESS estimate near 10%
  for (int c = 0; c < 200; ++c) {
    const Matrix x = funnel_reference_sample(rng, {5, 3.0}, n);
    est.push_back(x.col(0).mean());
  }
  CHECK(error_based_ess(est, 0.0, 3.0).ess == doctest::Approx(double(n)).epsilon(0.25));
}

TEST_CASE("cost per effective sample") {
  CHECK(*cost_per_ess(1000, 100) == 10.0);
  CHECK(*cost_per_ess(2000, 100) == 2.0 * *cost_per_ess(1000, 100));
  CHECK_FALSE(cost_per_ess(1000, kNaN).has_value());
  CHECK_FALSE(cost_per_ess(1000, 0.0).has_value());
}

TEST_CASE("Kolmogorov distribution tail") {
  CHECK(kolmogorov_survival(1.3580986393225505) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(kolmogorov_survival(1.6276236115189447) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(kolmogorov_survival(0.0) == 1.0);
  CHECK(kolmogorov_survival(0.2) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(kolmogorov_survival(10.0) < 1e-80);
}

TEST_CASE("KS on draws from the reference") {
  Rng rng(6);
  const auto cdf = [](double v) { return oracle::phi(v); };
  const int reps = 200;
  int rejected = 0;
  double dsum = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto ks = ks_statistic(normals(rng, 10000), cdf);
    REQUIRE(ks.defined);
    CHECK(ks.statistic >= 0.0);
    CHECK(ks.statistic <= 1.0);
    rejected += ks.p_value < 0.05;
    dsum += ks.statistic;
  }
  // 5% of tests reject; 200 trials, 3 sigma band
  CHECK(rejected <= 10 + 3 * 3.1);
  CHECK(dsum / reps < 1.36 / 100.0);

  const auto shifted = ks_statistic(normals(rng, 10000, 0.1), cdf);
  CHECK(shifted.p_value < 1e-6);
  CHECK_THROWS(ks_statistic(normals(rng, 50), cdf));

  // empirical CDF that hits the reference at every sample point: D = 1/(2n)
  std::vector<double> quantiles;
  for (int i = 0; i < 200; ++i) quantiles.push_back((i + 0.5) / 200.0);
  const auto u = ks_statistic(quantiles, [](double v) { return std::clamp(v, 0.0, 1.0); });
  CHECK(u.statistic == doctest::Approx(1.0 / 400.0).epsilon(1e-12));
}

TEST_CASE("tail KS conditions both sides on the region") {
  Rng rng(7);
  const auto cdf = [](double v) { return oracle::phi(v); };
  std::vector<double> x = normals(rng, 200000);
  const auto tail = ks_tail(x, cdf, 1.5);
  REQUIRE(tail.defined);
  CHECK(tail.p_value > 0.001);
  // thin the left tail by half: the tail test notices
  std::vector<double> thinned;
  bool skip = false;
  for (double v : x) {
    if (v < -1.5) {
      skip = !skip;
      if (skip) continue;
    }
    thinned.push_back(v);
  }
  CHECK(ks_tail(thinned, cdf, 1.5).p_value < 1e-6);
  CHECK_FALSE(ks_tail(std::vector<double>(200, 0.0), cdf, 1.0).defined);
}

TEST_CASE("bootstrap over chains") {
  Rng rng(8);
  std::vector<double> per_chain{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  auto mean_stat = [&](std::span<const std::size_t> idx) {
    double s = 0.0;
    for (auto i : idx) s += per_chain[i];
    return s / static_cast<double>(idx.size());
  };
  const auto b = bootstrap_over_chains(per_chain.size(), 2000, rng, mean_stat);
  CHECK(b.resamples == 2000);
  CHECK(b.usable == 2000);
  CHECK(b.mean == doctest::Approx(5.5).epsilon(0.02));
  // sd of the resampled mean is sqrt(8.25 / 10)
  CHECK(b.hi - b.lo == doctest::Approx(2.0 * std::sqrt(0.825)).epsilon(0.1));

  const std::vector<double> same(10, 4.0);
  const auto z = bootstrap_over_chains(same.size(), 200, rng, [&](std::span<const std::size_t> idx) {
    return same[idx[0]];
  });
  CHECK(z.lo == 4.0);
  CHECK(z.hi == 4.0);

  CHECK_THROWS(bootstrap_over_chains(7, 500, rng, mean_stat));
  CHECK_THROWS(bootstrap_over_chains(10, 199, rng, mean_stat));

  int calls = 0;
  const auto partial = bootstrap_over_chains(10, 200, rng, [&](std::span<const std::size_t>) {
    return ++calls % 2 ? 1.0 : kNaN;
  });
  CHECK(partial.usable == 100);
  CHECK(partial.mean == 1.0);
}

TEST_CASE("bootstrap interval covers the truth about 68% of the time") {
  Rng rng(9);
  int covered = 0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    const auto chains = normals(rng, 20);
    auto stat = [&](std::span<const std::size_t> idx) {
      double s = 0.0;
      for (auto i : idx) s += chains[i];
      return s / static_cast<double>(idx.size());
    };
    const auto b = bootstrap_over_chains(chains.size(), 400, rng, stat);
    covered += b.lo <= 0.0 && 0.0 <= b.hi;
  }
  const double rate = double(covered) / trials;
  CHECK(rate > 0.58);
  CHECK(rate < 0.76);
}

TEST_CASE("quantiles interpolate") {
  const std::vector<double> s{0.0, 1.0, 2.0, 3.0};
  CHECK(quantile_sorted(s, 0.0) == 0.0);
  CHECK(quantile_sorted(s, 1.0) == 3.0);
  CHECK(quantile_sorted(s, 0.5) == 1.5);
}
