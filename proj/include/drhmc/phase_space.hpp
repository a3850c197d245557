#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "drhmc/model.hpp"

namespace drhmc {

/// Diagonal mass matrix M. Kinetic energy is p^T M^{-1} p / 2.
class MassMatrix {
 public:
  explicit MassMatrix(Vector diag);
  static MassMatrix identity(Index d);
  /// Mass whose inverse is `inverse_diag` (e.g. estimated posterior variances).
  static MassMatrix from_inverse(Vector inverse_diag);

  Index dim() const { return diag_.size(); }
  const Vector& diag() const { return diag_; }
  const Vector& inverse() const { return inverse_; }
  double kinetic_energy(const Vector& p) const;

 private:
  Vector diag_;
  Vector inverse_;
};

/// A point x = (q, p) in phase space with a memo of log pi(q) and its
/// gradient. The memo, when set, always equals a fresh evaluation at q.
struct PhasePoint {
  Vector q;
  Vector p;
  bool evaluated = false;
  double log_density = -kInf;
  Vector grad;

  PhasePoint() = default;
  PhasePoint(Vector q_, Vector p_) : q(std::move(q_)), p(std::move(p_)) {}

  /// True once the point carries a non-finite density, position or gradient.
  bool poisoned() const;
};

/// Fills the memo if it is empty. Costs one model evaluation when it does.
void ensure_evaluated(PhasePoint& x, const TargetModel& model);

/// H = -log pi(q) + p^T M^{-1} p / 2; +inf for poisoned points. `x` must be
/// evaluated.
double hamiltonian(const PhasePoint& x, const MassMatrix& mass);
double hamiltonian(PhasePoint& x, const MassMatrix& mass, const TargetModel& model);

/// log of the joint (Gibbs) density, -H.
inline double log_joint(const PhasePoint& x, const MassMatrix& mass) { return -hamiltonian(x, mass); }

/// Counts leapfrog steps actually integrated.
struct FlowStats {
  std::uint64_t leapfrog_steps = 0;
};

/// One leapfrog step: half kick, drift with M^{-1}, half kick. Uses the memo
/// at x, so the step costs one gradient evaluation (two if x is fresh). A
/// poisoned input is returned unchanged.
PhasePoint leapfrog(PhasePoint x, double eps, const MassMatrix& mass, const TargetModel& model,
                    FlowStats* stats = nullptr);

/// (q, p) -> (q, -p)
PhasePoint momentum_flip(PhasePoint x);

/// Stage-k proposal map F_k = L^{n a^{k-1}}_{eps a^{-(k-1)}} P.
struct ProposalMapSpec {
  double eps = 0.1;
  long n_steps = 10;
  int stage = 1;
  int a = 2;

  void validate() const;
  double step_size() const;
  long steps() const;
  double integration_time() const { return eps * static_cast<double>(n_steps); }
};

/// Applies spec.steps() leapfrogs at spec.step_size() and flips the momentum.
/// Integration stops early once the trajectory is poisoned.
PhasePoint flow_map(PhasePoint x, const ProposalMapSpec& spec, const MassMatrix& mass, const TargetModel& model,
                    FlowStats* stats = nullptr);

using PhaseMap = std::function<PhasePoint(const PhasePoint&)>;

struct JacobianProbe {
  double abs_det = kNaN;
  double condition = kNaN;  // 2-norm condition number of the FD Jacobian
  bool ok = false;          // false if an image was poisoned or the determinant non-finite
};

/// Central-difference 2d x 2d Jacobian of `map` at x; reports |det|.
JacobianProbe jacobian_determinant_probe(const PhaseMap& map, const PhasePoint& x, double h = 1e-5);
JacobianProbe jacobian_determinant_probe(const ProposalMapSpec& spec, const MassMatrix& mass,
                                         const TargetModel& model, const PhasePoint& x, double h = 1e-5);

/// ||F(F(x)) - x|| / (1 + ||x||) over the concatenated (q, p).
double involution_error(const PhaseMap& map, const PhasePoint& x);
double involution_error(const ProposalMapSpec& spec, const MassMatrix& mass, const TargetModel& model,
                        const PhasePoint& x);

/// Mean |Delta H| over `points` after integrating to time `time` with each
/// step size, and the least-squares slope of log mean|Delta H| vs log eps.
struct EnergyScaling {
  std::vector<double> step_sizes;
  std::vector<double> mean_abs_delta_h;
  double slope = kNaN;
};

EnergyScaling energy_error_scaling(std::span<const PhasePoint> points, double time,
                                   std::span<const double> step_sizes, const MassMatrix& mass,
                                   const TargetModel& model);

}  // namespace drhmc
