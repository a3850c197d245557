#pragma once

#include <utility>
#include <vector>

#include "drhmc/delayed_rejection.hpp"
#include "drhmc/random.hpp"

namespace drhmc {

/// Nesterov dual averaging of log step size toward a target acceptance rate.
class DualAveraging {
 public:
  explicit DualAveraging(double target_accept = 0.8, double gamma = 0.05, double t0 = 10.0, double kappa = 0.75);

  /// Restarts with shrinkage point log(10 * eps_init).
  void restart(double eps_init);
  /// Feeds one acceptance statistic in [0, 1]; returns the step size to use next.
  double update(double observed_accept);

  double current() const { return std::exp(log_eps_); }
  /// The averaged iterate, used once adaptation stops.
  double averaged() const { return std::exp(log_eps_bar_); }
  long iterations() const { return t_; }

 private:
  double delta_, gamma_, t0_, kappa_;
  double mu_ = 0.0;
  double h_bar_ = 0.0;
  double log_eps_ = 0.0;
  double log_eps_bar_ = 0.0;
  long t_ = 0;
};

/// Doubles or halves eps from `eps_start` until a single leapfrog's acceptance
/// crosses 1/2. `x` must be evaluated.
double find_reasonable_step_size(Rng& rng, const PhasePoint& x, const MassMatrix& mass, const TargetModel& model,
                                 double eps_start = 1.0);

/// Inverse mass = 0.9 * sample variance + 0.1, per coordinate. Coordinates with
/// non-finite or zero variance fall back to 1. Rows are draws; at least 50.
MassMatrix estimate_diag_mass(const Matrix& draws);

/// Warmup schedule: a fast initial buffer, doubling slow windows that end with
/// a mass update, and a fast terminal buffer.
struct WarmupPlan {
  long n_warmup = 1000;
  double target_accept = 0.8;
  double integration_time = 1.0;
  long init_buffer = 75;
  long term_buffer = 50;
  long base_window = 50;
  long max_steps = 1024;
  bool adapt_mass = true;
  // Wider than the usual 0.05: less jitter in the iterates, so the averaged
  // step lands closer to the target acceptance.
  double da_gamma = 0.1;

  void validate() const;
  /// Half-open [begin, end) slow windows; empty when warmup is too short.
  std::vector<std::pair<long, long>> mass_windows() const;
};

struct WarmupResult {
  bool adapted = false;
  double step_size = kNaN;  // eps_f
  MassMatrix mass = MassMatrix::identity(1);
  long iterations = 0;
  double mean_accept = kNaN;
};

/// Runs HMC warmup from `x` (which is updated in place), adapting step size
/// and, when windows fit, the diagonal mass.
WarmupResult run_warmup(Rng& rng, PhasePoint& x, const WarmupPlan& plan, const TargetModel& model);

}  // namespace drhmc
