#pragma once

#include <filesystem>

#include "drhmc/model.hpp"
#include "drhmc/random.hpp"

namespace drhmc {

struct StochVolData {
  Vector y;       // mean-corrected returns
  Vector h_true;  // latent log volatilities, when simulated (else empty)

  /// CSV with a column `y` (and optionally `h`).
  static StochVolData load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  void validate() const;
};

/// Simulates h_1 ~ N(mu, sigma^2/(1-phi^2)), h_t = mu + phi (h_{t-1} - mu) +
/// sigma z_t, y_t ~ N(0, exp(h_t)). sigma = 0 is allowed and pins h_t = mu.
StochVolData stoch_vol_simulate(Rng& rng, Index t, double mu, double sigma, double phi);

/// Stochastic volatility posterior over (mu, log sigma, atanh phi, h_1..h_T):
///
///   mu ~ Cauchy(0, 10), sigma ~ half-Cauchy(0, 5), phi ~ U(-1, 1),
///   h_1 ~ N(mu, sigma^2 / (1 - phi^2)),
///   h_t ~ N(mu + phi (h_{t-1} - mu), sigma^2),  y_t ~ N(0, exp(h_t)),
///
/// plus the log-Jacobians log sigma and log(1 - phi^2).
class StochVolModel final : public TargetModel {
 public:
  explicit StochVolModel(StochVolData data);

  std::string name() const override { return "stoch_vol"; }
  Index dim() const override { return data_.y.size() + 3; }
  std::vector<std::string> parameter_names() const override;
  std::unique_ptr<TargetModel> clone() const override;

  const StochVolData& data() const { return data_; }

  /// log N(y | 0, exp(h)).
  static double observation_term(double y, double h);

 protected:
  double evaluate(const Vector& q, Vector& grad) const override;

 private:
  StochVolData data_;
};

}  // namespace drhmc
