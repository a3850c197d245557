#include "drhmc/models/mixture.hpp"

#include <numeric>
#include <stdexcept>

namespace drhmc {

MixtureSpec MixtureSpec::benchmark() { return {{0.5, 0.5}, {0.0, 3.0}, {0.1, 1.0}}; }

void MixtureSpec::validate() const {
  if (weights.empty()) throw std::invalid_argument("mixture: at least one component required");
  if (locations.size() != weights.size() || scales.size() != weights.size())
    throw std::invalid_argument("mixture: weights, locations and scales must have equal length");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0)) throw std::invalid_argument("mixture: weights must be positive");
    if (!(scales[i] > 0.0) || !std::isfinite(scales[i]))
      throw std::invalid_argument("mixture: scales must be positive");
    if (!std::isfinite(locations[i])) throw std::invalid_argument("mixture: locations must be finite");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture: weights must sum to 1");
}

MixtureModel::MixtureModel(MixtureSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (double w : spec_.weights) log_weights_.push_back(std::log(w));
}

std::unique_ptr<TargetModel> MixtureModel::clone() const { return std::make_unique<MixtureModel>(spec_); }

std::optional<ReferenceMoments> MixtureModel::reference_moments() const {
  double m1 = 0.0, m2 = 0.0, m4 = 0.0;
  for (std::size_t i = 0; i < spec_.weights.size(); ++i) {
    const double w = spec_.weights[i], mu = spec_.locations[i], s2 = square(spec_.scales[i]);
    m1 += w * mu;
    m2 += w * (mu * mu + s2);
    m4 += w * (std::pow(mu, 4) + 6.0 * mu * mu * s2 + 3.0 * s2 * s2);
  }
  ReferenceMoments m;
  m.mean1 = Vector::Constant(1, m1);
  m.sd1 = Vector::Constant(1, std::sqrt(m2 - m1 * m1));
  m.mean2 = Vector::Constant(1, m2);
  m.sd2 = Vector::Constant(1, std::sqrt(m4 - m2 * m2));
  return m;
}

double MixtureModel::evaluate(const Vector& q, Vector& grad) const {
  const double theta = q[0];
  const std::size_t k = spec_.weights.size();
  std::vector<double> terms(k);
  for (std::size_t i = 0; i < k; ++i)
    terms[i] = log_weights_[i] + normal_log_density(theta, spec_.locations[i], spec_.scales[i]);
  const double lp = log_sum_exp(terms);
  double g = 0.0;
  if (std::isfinite(lp)) {
    for (std::size_t i = 0; i < k; ++i) {
      const double resp = std::exp(terms[i] - lp);
      g -= resp * (theta - spec_.locations[i]) / square(spec_.scales[i]);
    }
  }
  grad[0] = g;
  return lp;
}

std::vector<double> mixture_reference_sample(Rng& rng, const MixtureSpec& spec, std::size_t n,
                                             std::vector<std::size_t>* components) {
  spec.validate();
  std::discrete_distribution<std::size_t> pick(spec.weights.begin(), spec.weights.end());
  std::vector<double> out(n);
  if (components) components->assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = pick(rng);
    out[i] = spec.locations[c] + spec.scales[c] * standard_normal(rng);
    if (components) (*components)[i] = c;
  }
  return out;
}

}  // namespace drhmc
