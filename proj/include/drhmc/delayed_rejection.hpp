#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "drhmc/phase_space.hpp"

namespace drhmc {

/// Probability of making stage j+1 after stage j was rejected, as a function
/// of the rejected stage's acceptance probability.
class RetryRule {
 public:
  enum class Kind { always, one_minus_alpha, constant };

  static RetryRule always() { return RetryRule(Kind::always, 1.0); }
  static RetryRule one_minus_alpha() { return RetryRule(Kind::one_minus_alpha, 1.0); }
  static RetryRule constant(double probability);
  /// "always", "one-minus-alpha" or "constant:<p>".
  static RetryRule parse(const std::string& id);

  Kind kind() const { return kind_; }
  std::string id() const;
  /// log p_{j+1} given log alpha_j.
  double log_probability(double log_alpha_rejected) const;

 private:
  RetryRule(Kind k, double p) : kind_(k), p_(p) {}
  Kind kind_;
  double p_;
};

inline constexpr int kMaxStages = 10;

/// Sampler settings. k_max = 1 is classical HMC.
struct DrConfig {
  double eps0 = 0.1;
  long n_steps = 10;
  MassMatrix mass = MassMatrix::identity(1);
  int k_max = 1;
  int a = 2;
  bool probabilistic = false;
  RetryRule retry_rule = RetryRule::one_minus_alpha();
  /// Proposals with H non-finite or Delta H above this are divergent.
  double divergence_threshold = 1000.0;
  /// Floor for log(1 - alpha_i(x)) and log p_{i+1}(x) on the current-state side.
  double log_floor = -700.0;

  void validate() const;
  ProposalMapSpec stage_map(int stage) const;
  double integration_time() const { return eps0 * static_cast<double>(n_steps); }
  /// FNV-1a over every field that affects a transition.
  std::uint64_t hash() const;
};

/// log alpha_1(x, y) = min(0, H(x) - H(y)); -inf when y is divergent.
double log_alpha1(const PhasePoint& x, const PhasePoint& y, const MassMatrix& mass,
                  double divergence_threshold = 1000.0);

struct StageRecord {
  bool proposed = false;
  double log_pi = kNaN;              // log joint density at the proposal
  double log_alpha = kNaN;           // log acceptance probability of the stage
  double log_retry = kNaN;           // log probability used to continue past this stage
  bool divergent = false;
  std::vector<double> ghost_log_alpha;  // log alpha_i at the proposal, i < stage
};

/// All phase points touched by one delayed-rejection transition from x.
///
/// Nodes are addressed by the sequence of stage maps applied to x; each node
/// memoizes its evaluated phase point, its children F_i(node) and its
/// acceptance probabilities, so each of the 2^k points needed for stage k is
/// integrated and evaluated exactly once.
class ProposalLadder {
 public:
  ProposalLadder(PhasePoint origin, const DrConfig& config, const TargetModel& model);

  /// log alpha_k(x). Builds whatever part of the tree stage k needs.
  double log_accept(int stage);
  /// F_k(x).
  const PhasePoint& proposal(int stage);
  const PhasePoint& origin() const { return nodes_[0].point; }

  /// log p_{j+1} after stage j was rejected at x; 0 in deterministic mode.
  double log_retry_probability(int stage);

  std::size_t density_points() const { return nodes_.size(); }
  std::uint64_t leapfrog_steps() const { return stats_.leapfrog_steps; }
  const StageRecord& record(int stage) const { return records_.at(stage - 1); }
  int accepted_stage = 0;

 private:
  struct Node {
    PhasePoint point;
    double log_pi = kNaN;
    std::array<int, kMaxStages> child;
    std::array<double, kMaxStages> log_alpha;
  };

  int add_node(PhasePoint point);
  int child(int node, int stage);
  double log_alpha(int node, int stage);
  double retry_term(double log_alpha_value, bool current_side) const;

  const DrConfig& config_;
  const TargetModel& model_;
  std::vector<Node> nodes_;
  std::vector<StageRecord> records_;
  FlowStats stats_;
};

/// log alpha_k at x for a fresh ladder (deterministic retries unless the
/// config says otherwise).
double log_alpha_k(const PhasePoint& x, int stage, const DrConfig& config, const TargetModel& model);

/// As `log_alpha_k` with retry probabilities folded into the ratio.
double log_alpha_k_probabilistic(const PhasePoint& x, int stage, const DrConfig& config, const TargetModel& model);

/// Probability of proposing stage j+1 after stage j was rejected.
double retry_probability(int stage, ProposalLadder& ladder);

}  // namespace drhmc
