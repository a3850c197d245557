#include "drhmc/models/funnel.hpp"

#include <stdexcept>

namespace drhmc {

void FunnelSpec::validate() const {
  if (d < 2) throw std::invalid_argument("funnel: d must be >= 2");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("funnel: sigma must be > 0");
}

FunnelModel::FunnelModel(FunnelSpec spec) : spec_(spec) { spec_.validate(); }

std::vector<std::string> FunnelModel::parameter_names() const {
  std::vector<std::string> names{"beta"};
  for (Index i = 2; i <= spec_.d; ++i) names.push_back("alpha" + std::to_string(i));
  return names;
}

std::unique_ptr<TargetModel> FunnelModel::clone() const { return std::make_unique<FunnelModel>(spec_); }

std::optional<ReferenceMoments> FunnelModel::reference_moments() const {
  const double s2 = square(spec_.sigma);
  ReferenceMoments m;
  m.mean1 = Vector::Zero(spec_.d);
  m.sd1 = Vector::Constant(spec_.d, std::exp(0.25 * s2));  // Var(alpha) = E exp(beta)
  m.mean2 = Vector::Constant(spec_.d, std::exp(0.5 * s2));
  // E alpha^4 = 3 E exp(2 beta) = 3 exp(2 sigma^2)
  m.sd2 = Vector::Constant(spec_.d, std::sqrt(3.0 * std::exp(2.0 * s2) - std::exp(s2)));
  m.sd1[0] = spec_.sigma;
  m.mean2[0] = s2;
  m.sd2[0] = std::sqrt(2.0) * s2;
  return m;
}

double FunnelModel::evaluate(const Vector& q, Vector& grad) const {
  const double beta = q[0];
  const auto alpha = q.tail(spec_.d - 1);
  const double m = static_cast<double>(spec_.d - 1);
  const double inv_var = std::exp(-beta);
  const double ss = alpha.squaredNorm();

  const double lp = normal_log_density(beta, 0.0, spec_.sigma) - m * kLogSqrtTwoPi - 0.5 * m * beta -
                    0.5 * ss * inv_var;
  grad[0] = -beta / square(spec_.sigma) - 0.5 * m + 0.5 * ss * inv_var;
  grad.tail(spec_.d - 1) = -alpha * inv_var;
  return lp;
}

Matrix funnel_reference_sample(Rng& rng, const FunnelSpec& spec, Index n) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("funnel_reference_sample: n must be >= 1");
  Matrix draws(n, spec.d);
  for (Index i = 0; i < n; ++i) {
    const double beta = spec.sigma * standard_normal(rng);
    draws(i, 0) = beta;
    const double scale = std::exp(0.5 * beta);
    for (Index j = 1; j < spec.d; ++j) draws(i, j) = scale * standard_normal(rng);
  }
  return draws;
}

}  // namespace drhmc
