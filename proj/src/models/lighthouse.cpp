#include "drhmc/models/lighthouse.hpp"

#include <stdexcept>

#include "drhmc/models/data.hpp"

namespace drhmc {

LighthouseData LighthouseData::benchmark() { return {{0.9, 1.2, 1.21}}; }

LighthouseData LighthouseData::load(const std::filesystem::path& path) {
  const auto cols = read_csv_columns(path);
  if (!cols.count("x")) throw std::runtime_error(path.string() + ": lighthouse data needs column x");
  LighthouseData d{cols.at("x")};
  d.validate();
  return d;
}

void LighthouseData::validate() const {
  if (flashes.empty()) throw std::invalid_argument("lighthouse: at least one flash required");
  for (double x : flashes)
    if (!std::isfinite(x)) throw std::invalid_argument("lighthouse: flash positions must be finite");
}

LighthouseModel::LighthouseModel(LighthouseData data) : data_(std::move(data)) { data_.validate(); }

std::unique_ptr<TargetModel> LighthouseModel::clone() const { return std::make_unique<LighthouseModel>(data_); }

double LighthouseModel::evaluate(const Vector& q, Vector& grad) const {
  const double x0 = q[0];
  const double log_y = q[1];
  const double y2 = std::exp(2.0 * log_y);
  const auto nf = static_cast<double>(data_.flashes.size());

  double lp = (nf + 1.0) * log_y - nf * kLogPi;
  double g0 = 0.0;
  double g1 = nf + 1.0;
  for (double xi : data_.flashes) {
    const double dx = xi - x0;
    const double denom = y2 + dx * dx;
    lp -= std::log(denom);
    g0 += 2.0 * dx / denom;
    g1 -= 2.0 * y2 / denom;
  }
  grad[0] = g0;
  grad[1] = g1;
  return lp;
}

}  // namespace drhmc
