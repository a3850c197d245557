#include "drhmc/delayed_rejection.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <stdexcept>

namespace drhmc {

RetryRule RetryRule::constant(double probability) {
  if (!(probability > 0.0 && probability <= 1.0))
    throw std::invalid_argument("retry rule: constant probability must be in (0, 1]");
  return RetryRule(Kind::constant, probability);
}

RetryRule RetryRule::parse(const std::string& id) {
  if (id == "always") return always();
  if (id == "one-minus-alpha") return one_minus_alpha();
  if (id.rfind("constant:", 0) == 0) {
    std::size_t used = 0;
    const std::string num = id.substr(9);
    double p = kNaN;
    try {
      p = std::stod(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != num.size()) throw std::invalid_argument("retry rule: bad constant '" + num + "'");
    return constant(p);
  }
  throw std::invalid_argument("retry rule: unknown rule '" + id + "'");
}

std::string RetryRule::id() const {
  switch (kind_) {
    case Kind::always:
      return "always";
    case Kind::one_minus_alpha:
      return "one-minus-alpha";
    case Kind::constant: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "constant:%.17g", p_);
      return buf;
    }
  }
  return "?";
}

double RetryRule::log_probability(double log_alpha_rejected) const {
  switch (kind_) {
    case Kind::always:
      return 0.0;
    case Kind::one_minus_alpha:
      return log1m_exp(log_alpha_rejected);
    case Kind::constant:
      return std::log(p_);
  }
  return 0.0;
}

void DrConfig::validate() const {
  if (!(eps0 > 0.0) || !std::isfinite(eps0)) throw std::invalid_argument("config: eps0 must be > 0");
  if (n_steps < 1) throw std::invalid_argument("config: n_steps must be >= 1");
  if (k_max < 1 || k_max > kMaxStages)
    throw std::invalid_argument("config: k_max must be in [1, " + std::to_string(kMaxStages) + "]");
  if (a < 2) throw std::invalid_argument("config: a must be an integer >= 2");
  if (!(divergence_threshold > 0.0)) throw std::invalid_argument("config: divergence threshold must be > 0");
  stage_map(k_max).validate();
}

ProposalMapSpec DrConfig::stage_map(int stage) const { return ProposalMapSpec{eps0, n_steps, stage, a}; }

namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void value(const T& v) {
    bytes(&v, sizeof v);
  }
};

}  // namespace

std::uint64_t DrConfig::hash() const {
  Fnv1a f;
  f.value(eps0);
  f.value(n_steps);
  f.value(k_max);
  f.value(a);
  f.value(probabilistic);
  f.value(divergence_threshold);
  f.value(log_floor);
  const std::string rule = retry_rule.id();
  f.bytes(rule.data(), rule.size());
  f.bytes(mass.diag().data(), sizeof(double) * static_cast<std::size_t>(mass.dim()));
  return f.h;
}

double log_alpha1(const PhasePoint& x, const PhasePoint& y, const MassMatrix& mass, double divergence_threshold) {
  const double hx = hamiltonian(x, mass);
  const double hy = hamiltonian(y, mass);
  if (!std::isfinite(hy) || !std::isfinite(hx) || hy - hx > divergence_threshold) return -kInf;
  return std::min(0.0, hx - hy);
}

ProposalLadder::ProposalLadder(PhasePoint origin, const DrConfig& config, const TargetModel& model)
    : config_(config), model_(model) {
  if (origin.q.size() != model.dim() || origin.p.size() != model.dim())
    throw std::invalid_argument("ladder: origin has wrong dimension");
  add_node(std::move(origin));
  records_.resize(static_cast<std::size_t>(config.k_max));
}

int ProposalLadder::add_node(PhasePoint point) {
  ensure_evaluated(point, model_);
  Node node;
  node.log_pi = point.poisoned() ? -kInf : log_joint(point, config_.mass);
  node.point = std::move(point);
  node.child.fill(-1);
  node.log_alpha.fill(kNaN);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

int ProposalLadder::child(int node, int stage) {
  const int existing = nodes_[node].child[stage - 1];
  if (existing >= 0) return existing;
  PhasePoint image = flow_map(nodes_[node].point, config_.stage_map(stage), config_.mass, model_, &stats_);
  const int id = add_node(std::move(image));
  nodes_[node].child[stage - 1] = id;
  return id;
}

double ProposalLadder::retry_term(double log_alpha_value, bool current_side) const {
  const double t = config_.retry_rule.log_probability(log_alpha_value);
  return current_side ? std::max(t, config_.log_floor) : t;
}

double ProposalLadder::log_alpha(int node, int stage) {
  const double memo = nodes_[node].log_alpha[stage - 1];
  if (!std::isnan(memo)) return memo;

  const int y = child(node, stage);
  const double lx = nodes_[node].log_pi;
  const double ly = nodes_[y].log_pi;
  double result = -kInf;
  // A divergent image gets zero acceptance and its ghost subtree is not needed.
  if (std::isfinite(lx) && std::isfinite(ly) && lx - ly <= config_.divergence_threshold) {
    double s = ly - lx;
    for (int i = 1; i < stage; ++i) {
      const double ax = log_alpha(node, i);
      const double ay = log_alpha(y, i);
      s += log1m_exp(ay) - std::max(log1m_exp(ax), config_.log_floor);
      if (config_.probabilistic) s += retry_term(ay, false) - retry_term(ax, true);
    }
    result = std::min(0.0, s);
  }
  nodes_[node].log_alpha[stage - 1] = result;
  return result;
}

double ProposalLadder::log_accept(int stage) {
  if (stage < 1 || stage > config_.k_max) throw std::out_of_range("ladder: stage out of range");
  const double la = log_alpha(0, stage);
  auto& rec = records_[static_cast<std::size_t>(stage - 1)];
  if (!rec.proposed) {
    const int y = nodes_[0].child[stage - 1];
    rec.proposed = true;
    rec.log_pi = nodes_[y].log_pi;
    rec.log_alpha = la;
    rec.divergent = !std::isfinite(nodes_[y].log_pi) ||
                    nodes_[0].log_pi - nodes_[y].log_pi > config_.divergence_threshold;
    for (int i = 1; i < stage; ++i) {
      const double g = nodes_[y].log_alpha[i - 1];
      rec.ghost_log_alpha.push_back(g);
    }
  }
  return la;
}

const PhasePoint& ProposalLadder::proposal(int stage) {
  if (stage < 1 || stage > config_.k_max) throw std::out_of_range("ladder: stage out of range");
  return nodes_[child(0, stage)].point;
}

double ProposalLadder::log_retry_probability(int stage) {
  const double la = log_accept(stage);
  double lp = 0.0;
  if (config_.probabilistic) lp = retry_term(la, true);
  // A rejected stage whose acceptance rounded to one cannot have been rejected.
  if (log1m_exp(la) < config_.log_floor) lp = -kInf;
  records_[static_cast<std::size_t>(stage - 1)].log_retry = lp;
  return lp;
}

double log_alpha_k(const PhasePoint& x, int stage, const DrConfig& config, const TargetModel& model) {
  DrConfig c = config;
  c.k_max = std::max(c.k_max, stage);
  ProposalLadder ladder(x, c, model);
  return ladder.log_accept(stage);
}

double log_alpha_k_probabilistic(const PhasePoint& x, int stage, const DrConfig& config,
                                 const TargetModel& model) {
  DrConfig c = config;
  c.probabilistic = true;
  return log_alpha_k(x, stage, c, model);
}

double retry_probability(int stage, ProposalLadder& ladder) { return std::exp(ladder.log_retry_probability(stage)); }

}  // namespace drhmc
