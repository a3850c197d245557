#include "drhmc/model.hpp"

#include <algorithm>

namespace drhmc {

ReferenceMoments ReferenceMoments::from_draws(const Matrix& draws) {
  const auto n = static_cast<double>(draws.rows());
  ReferenceMoments m;
  const Matrix sq = draws.array().square().matrix();
  m.mean1 = draws.colwise().mean().transpose();
  m.mean2 = sq.colwise().mean().transpose();
  m.sd1 = ((draws.rowwise() - m.mean1.transpose()).array().square().colwise().sum() / (n - 1.0))
              .sqrt()
              .transpose();
  m.sd2 = ((sq.rowwise() - m.mean2.transpose()).array().square().colwise().sum() / (n - 1.0))
              .sqrt()
              .transpose();
  return m;
}

std::vector<std::string> TargetModel::parameter_names() const {
  std::vector<std::string> names;
  for (Index i = 0; i < dim(); ++i) names.push_back("q" + std::to_string(i));
  return names;
}

double TargetModel::log_density_gradient(const Vector& q, Vector& grad) const {
  evals_.fetch_add(1, std::memory_order_relaxed);
  grad.setZero(dim());
  if (q.size() != dim() || !q.allFinite()) return -kInf;
  const double lp = evaluate(q, grad);
  if (std::isnan(lp)) return -kInf;
  return lp;
}

double TargetModel::log_density(const Vector& q) const {
  Vector scratch;
  return log_density_gradient(q, scratch);
}

GradientCheck check_gradient(const TargetModel& model, const Vector& q, double h) {
  GradientCheck out;
  Vector grad;
  Vector scratch;
  const double lp = model.log_density_gradient(q, grad);
  if (!std::isfinite(lp) || !grad.allFinite()) {
    out.finite = false;
    out.max_rel_error = kInf;
    return out;
  }
  Vector probe = q;
  for (Index j = 0; j < q.size(); ++j) {
    const double step = h * std::max(1.0, std::abs(q[j]));
    probe[j] = q[j] + step;
    const double up = model.log_density_gradient(probe, scratch);
    probe[j] = q[j] - step;
    const double down = model.log_density_gradient(probe, scratch);
    probe[j] = q[j];
    const double fd = (up - down) / (2.0 * step);
    if (!std::isfinite(fd)) {
      out.finite = false;
      out.max_rel_error = kInf;
      out.worst_index = j;
      continue;
    }
    const double scale = std::max({std::abs(grad[j]), std::abs(fd), 1.0});
    const double err = std::abs(grad[j] - fd) / scale;
    if (out.worst_index < 0 || err > out.max_rel_error) {
      out.max_rel_error = err;
      out.worst_index = j;
    }
  }
  return out;
}

}  // namespace drhmc
