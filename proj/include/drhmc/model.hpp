#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drhmc/math.hpp"

namespace drhmc {

/// Per-coordinate moments of the target, for error-based ESS.
///
/// `mean1`/`sd1` describe theta, `mean2`/`sd2` describe theta^2.
struct ReferenceMoments {
  Vector mean1;
  Vector sd1;
  Vector mean2;
  Vector sd2;

  /// Moments estimated from draws (rows are draws).
  static ReferenceMoments from_draws(const Matrix& draws);
};

/// Unnormalized target density over R^d with an analytic gradient.
///
/// Every call to `log_density_gradient` (and `log_density`, which is a joint
/// evaluation with the gradient discarded) counts as exactly one evaluation.
/// Implementations are immutable after construction; the counter is atomic so
/// the model can be evaluated from several threads.
class TargetModel {
 public:
  TargetModel() = default;
  TargetModel(const TargetModel&) = delete;
  TargetModel& operator=(const TargetModel&) = delete;
  virtual ~TargetModel() = default;

  virtual std::string name() const = 0;
  virtual Index dim() const = 0;
  virtual std::vector<std::string> parameter_names() const;

  /// Fresh copy with a zeroed evaluation counter.
  virtual std::unique_ptr<TargetModel> clone() const = 0;

  /// Closed-form moments, when the target has them.
  virtual std::optional<ReferenceMoments> reference_moments() const { return std::nullopt; }

  /// Returns log pi(q) and writes the gradient. Non-finite inputs or
  /// undefined densities give -inf rather than NaN.
  double log_density_gradient(const Vector& q, Vector& grad) const;
  double log_density(const Vector& q) const;

  std::uint64_t eval_count() const { return evals_.load(std::memory_order_relaxed); }
  void reset_eval_count() { evals_.store(0, std::memory_order_relaxed); }

 protected:
  virtual double evaluate(const Vector& q, Vector& grad) const = 0;

 private:
  mutable std::atomic<std::uint64_t> evals_{0};
};

struct GradientCheck {
  double max_rel_error = 0.0;
  Index worst_index = -1;
  bool finite = true;  // false if log density or any gradient entry was non-finite
};

/// Central finite differences against the analytic gradient.
///
/// The error for coordinate j is |g_j - fd_j| / max(|g_j|, |fd_j|, 1), i.e.
/// relative for components of magnitude above one and absolute below.
GradientCheck check_gradient(const TargetModel& model, const Vector& q, double h = 1e-5);

}  // namespace drhmc
