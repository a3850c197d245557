#include "drhmc/phase_space.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace drhmc {

MassMatrix::MassMatrix(Vector diag) : diag_(std::move(diag)) {
  if (diag_.size() < 1) throw std::invalid_argument("mass matrix: empty diagonal");
  if (!diag_.allFinite() || (diag_.array() <= 0.0).any())
    throw std::invalid_argument("mass matrix: entries must be positive and finite");
  inverse_ = diag_.cwiseInverse();
}

MassMatrix MassMatrix::identity(Index d) { return MassMatrix(Vector::Ones(d)); }

MassMatrix MassMatrix::from_inverse(Vector inverse_diag) {
  if (!inverse_diag.allFinite() || (inverse_diag.array() <= 0.0).any())
    throw std::invalid_argument("mass matrix: inverse entries must be positive and finite");
  return MassMatrix(inverse_diag.cwiseInverse());
}

double MassMatrix::kinetic_energy(const Vector& p) const { return 0.5 * p.cwiseProduct(inverse_).dot(p); }

bool PhasePoint::poisoned() const {
  if (!q.allFinite() || !p.allFinite()) return true;
  return evaluated && (!std::isfinite(log_density) || !grad.allFinite());
}

void ensure_evaluated(PhasePoint& x, const TargetModel& model) {
  if (x.evaluated) return;
  x.log_density = model.log_density_gradient(x.q, x.grad);
  x.evaluated = true;
}

double hamiltonian(const PhasePoint& x, const MassMatrix& mass) {
  if (!x.evaluated) throw std::logic_error("hamiltonian: point not evaluated");
  if (x.poisoned()) return kInf;
  const double h = -x.log_density + mass.kinetic_energy(x.p);
  return std::isnan(h) ? kInf : h;
}

double hamiltonian(PhasePoint& x, const MassMatrix& mass, const TargetModel& model) {
  ensure_evaluated(x, model);
  return hamiltonian(x, mass);
}

PhasePoint leapfrog(PhasePoint x, double eps, const MassMatrix& mass, const TargetModel& model, FlowStats* stats) {
  ensure_evaluated(x, model);
  if (x.poisoned()) return x;
  x.p += (0.5 * eps) * x.grad;
  x.q += eps * mass.inverse().cwiseProduct(x.p);
  x.log_density = model.log_density_gradient(x.q, x.grad);
  x.p += (0.5 * eps) * x.grad;
  if (stats) ++stats->leapfrog_steps;
  return x;
}

PhasePoint momentum_flip(PhasePoint x) {
  x.p = -x.p;
  return x;
}

void ProposalMapSpec::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("proposal map: eps must be > 0");
  if (n_steps < 0) throw std::invalid_argument("proposal map: n_steps must be >= 0");
  if (stage < 1) throw std::invalid_argument("proposal map: stage must be >= 1");
  if (a < 2) throw std::invalid_argument("proposal map: a must be an integer >= 2");
  (void)steps();
}

double ProposalMapSpec::step_size() const { return eps / std::pow(static_cast<double>(a), stage - 1); }

long ProposalMapSpec::steps() const {
  long s = n_steps;
  for (int k = 1; k < stage; ++k) {
    if (s > (1L << 40) / a) throw std::overflow_error("proposal map: step count overflow");
    s *= a;
  }
  return s;
}

PhasePoint flow_map(PhasePoint x, const ProposalMapSpec& spec, const MassMatrix& mass, const TargetModel& model,
                    FlowStats* stats) {
  const double eps = spec.step_size();
  const long steps = spec.steps();
  for (long i = 0; i < steps; ++i) {
    x = leapfrog(std::move(x), eps, mass, model, stats);
    if (x.poisoned()) break;
  }
  return momentum_flip(std::move(x));
}

namespace {

Vector stack(const PhasePoint& x) {
  Vector z(x.q.size() + x.p.size());
  z << x.q, x.p;
  return z;
}

PhasePoint unstack(const Vector& z, Index d) { return PhasePoint(z.head(d), z.tail(d)); }

}  // namespace

JacobianProbe jacobian_determinant_probe(const PhaseMap& map, const PhasePoint& x, double h) {
  const Index d = x.q.size();
  const Vector z = stack(x);
  Matrix jac(2 * d, 2 * d);
  JacobianProbe out;
  // central differences at h and h/2, combined by Richardson extrapolation so
  // the truncation error is O(h^4); stiff flows need it
  auto central = [&](Index j, double step, Vector& col) {
    Vector zp = z, zm = z;
    zp[j] += step;
    zm[j] -= step;
    const PhasePoint fp = map(unstack(zp, d));
    const PhasePoint fm = map(unstack(zm, d));
    if (fp.poisoned() || fm.poisoned()) return false;
    col = (stack(fp) - stack(fm)) / (2.0 * step);
    return true;
  };
  for (Index j = 0; j < 2 * d; ++j) {
    const double step = h * std::max(1.0, std::abs(z[j]));
    Vector coarse, fine;
    if (!central(j, step, coarse) || !central(j, 0.5 * step, fine)) return out;
    jac.col(j) = (4.0 * fine - coarse) / 3.0;
  }
  out.abs_det = std::abs(jac.partialPivLu().determinant());
  Eigen::JacobiSVD<Matrix> svd(jac);
  const auto& sv = svd.singularValues();
  out.condition = sv[0] / sv[sv.size() - 1];
  out.ok = std::isfinite(out.abs_det) && std::isfinite(out.condition);
  return out;
}

JacobianProbe jacobian_determinant_probe(const ProposalMapSpec& spec, const MassMatrix& mass,
                                         const TargetModel& model, const PhasePoint& x, double h) {
  return jacobian_determinant_probe(
      [&](const PhasePoint& y) { return flow_map(y, spec, mass, model); }, x, h);
}

double involution_error(const PhaseMap& map, const PhasePoint& x) {
  const PhasePoint once = map(PhasePoint(x.q, x.p));
  const PhasePoint twice = map(PhasePoint(once.q, once.p));
  if (twice.poisoned()) return kInf;
  const Vector z = stack(x);
  return (stack(twice) - z).norm() / (1.0 + z.norm());
}

double involution_error(const ProposalMapSpec& spec, const MassMatrix& mass, const TargetModel& model,
                        const PhasePoint& x) {
  return involution_error([&](const PhasePoint& y) { return flow_map(y, spec, mass, model); }, x);
}

EnergyScaling energy_error_scaling(std::span<const PhasePoint> points, double time,
                                   std::span<const double> step_sizes, const MassMatrix& mass,
                                   const TargetModel& model) {
  EnergyScaling out;
  for (double eps : step_sizes) {
    const long steps = std::lround(time / eps);
    ProposalMapSpec spec{eps, steps, 1, 2};
    double total = 0.0;
    for (const auto& start : points) {
      PhasePoint x(start.q, start.p);
      const double h0 = hamiltonian(x, mass, model);
      const PhasePoint y = flow_map(x, spec, mass, model);
      total += std::abs(hamiltonian(y, mass) - h0);
    }
    out.step_sizes.push_back(eps);
    out.mean_abs_delta_h.push_back(total / static_cast<double>(points.size()));
  }
  const auto n = static_cast<double>(out.step_sizes.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < out.step_sizes.size(); ++i) {
    const double lx = std::log(out.step_sizes[i]);
    const double ly = std::log(out.mean_abs_delta_h[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return out;
}

}  // namespace drhmc
