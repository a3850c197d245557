#include "drhmc/models/stoch_vol.hpp"

#include <stdexcept>

#include "drhmc/models/data.hpp"

namespace drhmc {

namespace {
constexpr double kMuScale = 10.0;
constexpr double kSigmaScale = 5.0;
}  // namespace

StochVolData StochVolData::load(const std::filesystem::path& path) {
  const auto cols = read_csv_columns(path);
  if (!cols.count("y")) throw std::runtime_error(path.string() + ": stochastic volatility data needs column y");
  StochVolData d;
  d.y = Eigen::Map<const Vector>(cols.at("y").data(), static_cast<Index>(cols.at("y").size()));
  if (cols.count("h"))
    d.h_true = Eigen::Map<const Vector>(cols.at("h").data(), static_cast<Index>(cols.at("h").size()));
  d.validate();
  return d;
}

void StochVolData::save(const std::filesystem::path& path) const {
  CsvColumns cols;
  cols["y"].assign(y.data(), y.data() + y.size());
  std::vector<std::string> order{"y"};
  if (h_true.size() == y.size()) {
    cols["h"].assign(h_true.data(), h_true.data() + h_true.size());
    order.push_back("h");
  }
  write_csv_columns(path, order, cols);
}

void StochVolData::validate() const {
  if (y.size() < 1) throw std::invalid_argument("stoch_vol: at least one return required");
  if (!y.allFinite()) throw std::invalid_argument("stoch_vol: returns must be finite");
}

StochVolData stoch_vol_simulate(Rng& rng, Index t, double mu, double sigma, double phi) {
  if (t < 1) throw std::invalid_argument("stoch_vol_simulate: T must be >= 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("stoch_vol_simulate: sigma must be >= 0");
  if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("stoch_vol_simulate: |phi| must be < 1");
  if (!std::isfinite(mu)) throw std::invalid_argument("stoch_vol_simulate: mu must be finite");
  StochVolData d;
  d.h_true.resize(t);
  d.y.resize(t);
  d.h_true[0] = mu + sigma / std::sqrt(1.0 - phi * phi) * standard_normal(rng);
  for (Index i = 1; i < t; ++i) d.h_true[i] = mu + phi * (d.h_true[i - 1] - mu) + sigma * standard_normal(rng);
  for (Index i = 0; i < t; ++i) d.y[i] = std::exp(0.5 * d.h_true[i]) * standard_normal(rng);
  return d;
}

StochVolModel::StochVolModel(StochVolData data) : data_(std::move(data)) { data_.validate(); }

std::vector<std::string> StochVolModel::parameter_names() const {
  std::vector<std::string> names{"mu", "log_sigma", "atanh_phi"};
  for (Index t = 1; t <= data_.y.size(); ++t) names.push_back("h" + std::to_string(t));
  return names;
}

std::unique_ptr<TargetModel> StochVolModel::clone() const { return std::make_unique<StochVolModel>(data_); }

double StochVolModel::observation_term(double y, double h) {
  return -kLogSqrtTwoPi - 0.5 * h - 0.5 * y * y * std::exp(-h);
}

double StochVolModel::evaluate(const Vector& q, Vector& grad) const {
  const Index n = data_.y.size();
  const double mu = q[0];
  const double log_sigma = q[1];
  const double z = q[2];
  const double sigma = std::exp(log_sigma);
  const double phi = std::tanh(z);
  const double one_m_phi2 = 1.0 - phi * phi;
  const double log1m_phi2 = log1m_tanh_sq(z);
  const double inv_s2 = std::exp(-2.0 * log_sigma);
  const auto h = q.tail(n);
  auto gh = grad.tail(n);

  double g_mu = 0.0, g_ls = 0.0, g_z = 0.0;

  // priors and Jacobians
  double lp = cauchy_log_density(mu, 0.0, kMuScale);
  g_mu += -2.0 * mu / (kMuScale * kMuScale + mu * mu);
  const double u = square(sigma / kSigmaScale);
  lp += half_cauchy_log_density(sigma, kSigmaScale) + log_sigma;
  g_ls += -2.0 * u / (1.0 + u) + 1.0;
  lp += -std::log(2.0) + log1m_phi2;
  g_z += -2.0 * phi;

  // stationary initial state; its variance sigma^2 / (1 - phi^2)
  const double d1 = h[0] - mu;
  lp += -kLogSqrtTwoPi - log_sigma + 0.5 * log1m_phi2 - 0.5 * d1 * d1 * one_m_phi2 * inv_s2;
  g_mu += d1 * one_m_phi2 * inv_s2;
  g_ls += -1.0 + d1 * d1 * one_m_phi2 * inv_s2;
  // d/dz with dphi/dz = 1 - phi^2
  g_z += -phi + d1 * d1 * phi * one_m_phi2 * inv_s2;
  gh[0] = -d1 * one_m_phi2 * inv_s2;
  for (Index t = 1; t < n; ++t) gh[t] = 0.0;

  for (Index t = 1; t < n; ++t) {
    const double prev = h[t - 1] - mu;
    const double r = h[t] - mu - phi * prev;
    lp += -kLogSqrtTwoPi - log_sigma - 0.5 * r * r * inv_s2;
    gh[t] -= r * inv_s2;
    gh[t - 1] += phi * r * inv_s2;
    g_mu += r * (1.0 - phi) * inv_s2;
    g_ls += -1.0 + r * r * inv_s2;
    g_z += r * prev * inv_s2 * one_m_phi2;
  }

  for (Index t = 0; t < n; ++t) {
    const double y2e = data_.y[t] * data_.y[t] * std::exp(-h[t]);
    lp += -kLogSqrtTwoPi - 0.5 * h[t] - 0.5 * y2e;
    gh[t] += -0.5 + 0.5 * y2e;
  }

  grad[0] = g_mu;
  grad[1] = g_ls;
  grad[2] = g_z;
  return lp;
}

}  // namespace drhmc
