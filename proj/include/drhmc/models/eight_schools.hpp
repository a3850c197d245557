#pragma once

#include <filesystem>

#include "drhmc/model.hpp"

namespace drhmc {

struct EightSchoolsData {
  Vector y;
  Vector sigma;

  /// The Rubin (1981) treatment effects.
  static EightSchoolsData rubin();
  /// CSV with columns `y` and `sigma`.
  static EightSchoolsData load(const std::filesystem::path& path);
  void validate() const;
};

/// Centered eight-schools posterior over (mu, log tau, theta_1..theta_J):
///
///   mu ~ N(0, 5^2), tau ~ half-Cauchy(0, 5), theta_n ~ N(mu, tau^2),
///   y_n ~ N(theta_n, sigma_n^2),
///
/// with the log-Jacobian of tau = exp(log tau) added.
class EightSchoolsModel final : public TargetModel {
 public:
  explicit EightSchoolsModel(EightSchoolsData data);

  std::string name() const override { return "eight_schools"; }
  Index dim() const override { return data_.y.size() + 2; }
  std::vector<std::string> parameter_names() const override;
  std::unique_ptr<TargetModel> clone() const override;

  const EightSchoolsData& data() const { return data_; }

  /// Half-Cauchy prior on tau plus the log-Jacobian, as a function of log tau.
  static double tau_prior_term(double log_tau);

 protected:
  double evaluate(const Vector& q, Vector& grad) const override;

 private:
  EightSchoolsData data_;
};

}  // namespace drhmc
