#include "drhmc/models/normal.hpp"

#include <stdexcept>

namespace drhmc {

NormalModel::NormalModel(Vector scales) : scales_(std::move(scales)) {
  if (scales_.size() < 1) throw std::invalid_argument("normal: dimension must be positive");
  if (!scales_.allFinite() || (scales_.array() <= 0.0).any())
    throw std::invalid_argument("normal: scales must be positive and finite");
}

NormalModel NormalModel::standard(Index d) { return NormalModel(Vector::Ones(d)); }

std::unique_ptr<TargetModel> NormalModel::clone() const {
  return std::make_unique<NormalModel>(scales_);
}

std::optional<ReferenceMoments> NormalModel::reference_moments() const {
  ReferenceMoments m;
  const Vector var = scales_.array().square();
  m.mean1 = Vector::Zero(dim());
  m.sd1 = scales_;
  m.mean2 = var;
  m.sd2 = std::sqrt(2.0) * var;  // Var(x^2) = 2 s^4
  return m;
}

double NormalModel::evaluate(const Vector& q, Vector& grad) const {
  const Vector z = q.cwiseQuotient(scales_);
  grad = -z.cwiseQuotient(scales_);
  return -0.5 * z.squaredNorm() - scales_.array().log().sum() -
         static_cast<double>(dim()) * kLogSqrtTwoPi;
}

}  // namespace drhmc
