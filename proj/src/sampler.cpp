#include "drhmc/sampler.hpp"

#include <algorithm>
#include <stdexcept>

namespace drhmc {

Vector refresh_momentum(Rng& rng, const MassMatrix& mass) {
  Vector p(mass.dim());
  for (Index j = 0; j < p.size(); ++j) p[j] = std::sqrt(mass.diag()[j]) * standard_normal(rng);
  return p;
}

namespace {

PhasePoint with_fresh_momentum(Rng& rng, const PhasePoint& current, const MassMatrix& mass,
                               const TargetModel& model) {
  if (current.q.size() != model.dim() || mass.dim() != model.dim())
    throw std::invalid_argument("transition: dimension mismatch between state, mass and model");
  PhasePoint x = current;
  x.p = refresh_momentum(rng, mass);
  ensure_evaluated(x, model);
  return x;
}

}  // namespace

TransitionResult hmc_transition(Rng& rng, const PhasePoint& current, const DrConfig& config,
                                const TargetModel& model) {
  PhasePoint x = with_fresh_momentum(rng, current, config.mass, model);
  FlowStats stats;
  PhasePoint y = flow_map(x, config.stage_map(1), config.mass, model, &stats);
  const double la = log_alpha1(x, y, config.mass, config.divergence_threshold);

  TransitionResult out;
  out.stages_tried = 1;
  out.accept_stat = std::exp(la);
  out.leapfrog_steps = stats.leapfrog_steps;
  out.density_points = 2;
  const double hx = hamiltonian(x, config.mass);
  const double hy = hamiltonian(y, config.mass);
  out.divergent = !std::isfinite(hy) || hy - hx > config.divergence_threshold;
  StageRecord rec;
  rec.proposed = true;
  rec.log_pi = -hy;
  rec.log_alpha = la;
  rec.divergent = out.divergent;
  out.stages.push_back(rec);

  if (std::log(uniform01(rng)) < la) {
    out.accepted_stage = 1;
    out.next = std::move(y);
  } else {
    out.next = std::move(x);
  }
  return out;
}

TransitionResult drhmc_transition(Rng& rng, const PhasePoint& current, const DrConfig& config,
                                  const TargetModel& model) {
  PhasePoint x = with_fresh_momentum(rng, current, config.mass, model);
  ProposalLadder ladder(x, config, model);
  TransitionResult out;
  for (int k = 1; k <= config.k_max; ++k) {
    const double la = ladder.log_accept(k);
    out.stages_tried = k;
    if (k == 1) out.accept_stat = std::exp(la);
    if (ladder.record(k).divergent) out.divergent = true;
    if (std::log(uniform01(rng)) < la) {
      out.accepted_stage = k;
      break;
    }
    if (k == config.k_max) break;
    const double lp = ladder.log_retry_probability(k);
    if (!(std::log(uniform01(rng)) < lp)) break;
  }
  ladder.accepted_stage = out.accepted_stage;
  for (int k = 1; k <= out.stages_tried; ++k) out.stages.push_back(ladder.record(k));
  out.density_points = ladder.density_points();
  out.leapfrog_steps = ladder.leapfrog_steps();
  out.next = out.accepted_stage > 0 ? ladder.proposal(out.accepted_stage) : ladder.origin();
  return out;
}

std::vector<long> ChainResult::stage_histogram() const {
  std::vector<long> h(static_cast<std::size_t>(config.k_max) + 1, 0);
  for (int s : stage_tags) ++h.at(static_cast<std::size_t>(s));
  return h;
}

Vector initial_position(Rng& rng, const TargetModel& model, int max_tries) {
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  Vector grad;
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Vector q(model.dim());
    for (Index j = 0; j < q.size(); ++j) q[j] = unif(rng);
    const double lp = model.log_density_gradient(q, grad);
    if (std::isfinite(lp) && grad.allFinite()) return q;
  }
  throw std::runtime_error("initialization: no finite-density point found for model " + model.name());
}

ChainResult run_chain(std::uint64_t seed, const TargetModel& model, const ChainSpec& spec) {
  if (spec.n_draws < 1) throw std::invalid_argument("run_chain: n_draws must be >= 1");
  if (spec.n_warmup < 0) throw std::invalid_argument("run_chain: n_warmup must be >= 0");

  Rng rng(seed);
  ChainResult out;
  out.seed = seed;
  const std::uint64_t start_count = model.eval_count();

  PhasePoint x;
  x.q = spec.initial_q ? *spec.initial_q : initial_position(rng, model);
  if (x.q.size() != model.dim()) throw std::invalid_argument("run_chain: initial point has wrong dimension");
  x.p = Vector::Zero(model.dim());
  ensure_evaluated(x, model);
  if (x.poisoned()) throw std::invalid_argument("run_chain: initial point has non-finite density");
  out.initial_q = x.q;

  DrConfig config = spec.config;
  if (spec.adapt) {
    WarmupPlan plan = *spec.adapt;
    plan.n_warmup = spec.n_warmup;
    out.warmup = run_warmup(rng, x, plan, model);
    const double eps = spec.eps_multiplier * out.warmup.step_size;
    config.eps0 = eps;
    config.n_steps = std::max(1L, std::lround(plan.integration_time / eps));
    config.mass = out.warmup.mass;
  } else {
    for (long i = 0; i < spec.n_warmup; ++i) x = drhmc_transition(rng, x, config, model).next;
    out.warmup.step_size = config.eps0;
    out.warmup.mass = config.mass;
    out.warmup.iterations = spec.n_warmup;
  }
  config.validate();
  if (config.mass.dim() != model.dim()) throw std::invalid_argument("run_chain: mass has wrong dimension");
  out.config = config;
  out.config_hash = config.hash();
  out.sampling_start_q = x.q;

  const std::uint64_t sampling_start = model.eval_count();
  out.warmup_evals = sampling_start - start_count;
  const auto n = static_cast<std::size_t>(spec.n_draws);
  out.draws.resize(spec.n_draws, model.dim());
  out.stage_tags.reserve(n);
  out.stages_tried.reserve(n);
  out.cum_evals.reserve(n);
  out.divergent.reserve(n);
  for (long i = 0; i < spec.n_draws; ++i) {
    TransitionResult t = drhmc_transition(rng, x, out.config, model);
    x = std::move(t.next);
    out.draws.row(i) = x.q.transpose();
    out.stage_tags.push_back(t.accepted_stage);
    out.stages_tried.push_back(t.stages_tried);
    out.divergent.push_back(t.divergent ? 1 : 0);
    out.cum_evals.push_back(model.eval_count() - sampling_start);
  }
  if (out.config.hash() != out.config_hash) throw std::logic_error("run_chain: sampling config mutated");
  return out;
}

}  // namespace drhmc
