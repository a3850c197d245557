#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "drhmc/adaptation.hpp"
#include "drhmc/delayed_rejection.hpp"
#include "drhmc/random.hpp"

namespace drhmc {

/// p_j = sqrt(M_jj) z_j
Vector refresh_momentum(Rng& rng, const MassMatrix& mass);

struct TransitionResult {
  PhasePoint next;
  int accepted_stage = 0;  // 0 when every stage was rejected
  int stages_tried = 0;
  bool divergent = false;  // any proposal divergent
  double accept_stat = 0.0;  // stage-1 acceptance probability
  std::size_t density_points = 0;  // distinct phase points evaluated, origin included
  std::uint64_t leapfrog_steps = 0;
  std::vector<StageRecord> stages;  // one per tried stage
};

/// Classical HMC: momentum refresh then MH with F = L^n_eps P.
TransitionResult hmc_transition(Rng& rng, const PhasePoint& current, const DrConfig& config, const TargetModel& model);

/// Delayed-rejection transition with up to config.k_max stages. RNG use per
/// transition: d normals, one uniform per tried stage, one more per rejected
/// stage below k_max (the retry draw, also in deterministic mode).
TransitionResult drhmc_transition(Rng& rng, const PhasePoint& current, const DrConfig& config,
                                  const TargetModel& model);

struct ChainSpec {
  DrConfig config;  // eps0, n_steps and mass are replaced when adapting
  long n_warmup = 0;
  long n_draws = 1;
  /// Absent: warmup is plain burn-in with `config`.
  std::optional<WarmupPlan> adapt;
  /// Sampling step size is eps_multiplier * eps_f after adaptation.
  double eps_multiplier = 1.0;
  std::optional<Vector> initial_q;
};

struct ChainResult {
  Matrix draws;  // n_draws x d
  std::vector<int> stage_tags;
  std::vector<int> stages_tried;
  std::vector<std::uint64_t> cum_evals;  // sampling-phase evaluations after each draw
  std::vector<std::uint8_t> divergent;
  std::uint64_t seed = 0;
  DrConfig config;  // frozen sampling configuration
  std::uint64_t config_hash = 0;
  WarmupResult warmup;
  std::uint64_t warmup_evals = 0;  // initialization and warmup
  Vector initial_q;
  Vector sampling_start_q;  // state the first sampling transition starts from

  std::uint64_t sampling_evals() const { return cum_evals.empty() ? 0 : cum_evals.back(); }
  std::uint64_t total_evals() const { return warmup_evals + sampling_evals(); }
  /// histogram[s] = number of draws with stage tag s, s = 0..k_max
  std::vector<long> stage_histogram() const;
  /// Position the i-th sampling transition started from.
  Vector transition_origin(Index i) const { return i == 0 ? sampling_start_q : Vector(draws.row(i - 1).transpose()); }
};

/// Uniform(-2, 2)^d initial position, redrawn until the density is finite.
Vector initial_position(Rng& rng, const TargetModel& model, int max_tries = 100);

/// Warmup (adaptive or burn-in) then n_draws transitions. Deterministic in
/// `seed`. Evaluation counts are read from the model's counter, so give each
/// concurrent chain its own model.
ChainResult run_chain(std::uint64_t seed, const TargetModel& model, const ChainSpec& spec);

}  // namespace drhmc
