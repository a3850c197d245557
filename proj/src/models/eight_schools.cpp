#include "drhmc/models/eight_schools.hpp"

#include <stdexcept>

#include "drhmc/models/data.hpp"

namespace drhmc {

namespace {
constexpr double kMuScale = 5.0;
constexpr double kTauScale = 5.0;
}  // namespace

EightSchoolsData EightSchoolsData::rubin() {
  EightSchoolsData d;
  d.y = (Vector(8) << 28, 8, -3, 7, -1, 1, 18, 12).finished();
  d.sigma = (Vector(8) << 15, 10, 16, 11, 9, 11, 10, 18).finished();
  return d;
}

EightSchoolsData EightSchoolsData::load(const std::filesystem::path& path) {
  const auto cols = read_csv_columns(path);
  if (!cols.count("y") || !cols.count("sigma"))
    throw std::runtime_error(path.string() + ": eight schools data needs columns y,sigma");
  EightSchoolsData d;
  d.y = Eigen::Map<const Vector>(cols.at("y").data(), static_cast<Index>(cols.at("y").size()));
  d.sigma = Eigen::Map<const Vector>(cols.at("sigma").data(), static_cast<Index>(cols.at("sigma").size()));
  d.validate();
  return d;
}

void EightSchoolsData::validate() const {
  if (y.size() < 1 || y.size() != sigma.size())
    throw std::invalid_argument("eight_schools: y and sigma must be nonempty and equal length");
  if ((sigma.array() <= 0.0).any() || !sigma.allFinite() || !y.allFinite())
    throw std::invalid_argument("eight_schools: sigma must be positive, data finite");
}

EightSchoolsModel::EightSchoolsModel(EightSchoolsData data) : data_(std::move(data)) { data_.validate(); }

std::vector<std::string> EightSchoolsModel::parameter_names() const {
  std::vector<std::string> names{"mu", "log_tau"};
  for (Index n = 1; n <= data_.y.size(); ++n) names.push_back("theta" + std::to_string(n));
  return names;
}

std::unique_ptr<TargetModel> EightSchoolsModel::clone() const {
  return std::make_unique<EightSchoolsModel>(data_);
}

double EightSchoolsModel::tau_prior_term(double log_tau) {
  return half_cauchy_log_density(std::exp(log_tau), kTauScale) + log_tau;
}

double EightSchoolsModel::evaluate(const Vector& q, Vector& grad) const {
  const Index j = data_.y.size();
  const double mu = q[0];
  const double log_tau = q[1];
  const double tau = std::exp(log_tau);
  const auto theta = q.tail(j);
  if (tau == 0.0 || !std::isfinite(tau)) return -kInf;

  const double inv_tau2 = std::exp(-2.0 * log_tau);
  const Vector dev = theta.array() - mu;
  const Vector resid = data_.y - theta;
  const Vector inv_s2 = data_.sigma.array().square().inverse();

  double lp = normal_log_density(mu, 0.0, kMuScale) + tau_prior_term(log_tau);
  lp += -static_cast<double>(j) * (kLogSqrtTwoPi + log_tau) - 0.5 * dev.squaredNorm() * inv_tau2;
  lp += -static_cast<double>(j) * kLogSqrtTwoPi - data_.sigma.array().log().sum() -
        0.5 * resid.cwiseProduct(resid).dot(inv_s2);

  const double u = square(tau / kTauScale);
  grad[0] = -mu / square(kMuScale) + dev.sum() * inv_tau2;
  grad[1] = -2.0 * u / (1.0 + u) + 1.0 - static_cast<double>(j) + dev.squaredNorm() * inv_tau2;
  grad.tail(j) = -dev * inv_tau2 + resid.cwiseProduct(inv_s2);
  return lp;
}

}  // namespace drhmc
