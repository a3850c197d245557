#include "drhmc/adaptation.hpp"

#include <algorithm>
#include <stdexcept>

#include "drhmc/sampler.hpp"

namespace drhmc {

DualAveraging::DualAveraging(double target_accept, double gamma, double t0, double kappa)
    : delta_(target_accept), gamma_(gamma), t0_(t0), kappa_(kappa) {
  if (!(gamma > 0.0) || !(t0 >= 0.0) || !(kappa > 0.0)) throw std::invalid_argument("dual averaging: bad constants");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("dual averaging: target acceptance must be in (0, 1)");
  restart(1.0);
}

void DualAveraging::restart(double eps_init) {
  if (!(eps_init > 0.0) || !std::isfinite(eps_init))
    throw std::invalid_argument("dual averaging: initial step size must be > 0");
  mu_ = std::log(10.0 * eps_init);
  h_bar_ = 0.0;
  log_eps_ = std::log(eps_init);
  log_eps_bar_ = 0.0;
  t_ = 0;
}

double DualAveraging::update(double observed_accept) {
  const double a = std::isfinite(observed_accept) ? std::clamp(observed_accept, 0.0, 1.0) : 0.0;
  ++t_;
  const double t = static_cast<double>(t_);
  const double eta = 1.0 / (t + t0_);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (delta_ - a);
  log_eps_ = mu_ - std::sqrt(t) / gamma_ * h_bar_;
  const double w = std::pow(t, -kappa_);
  log_eps_bar_ = w * log_eps_ + (1.0 - w) * log_eps_bar_;
  return std::exp(log_eps_);
}

double find_reasonable_step_size(Rng& rng, const PhasePoint& x, const MassMatrix& mass, const TargetModel& model,
                                 double eps_start) {
  if (!x.evaluated) throw std::invalid_argument("step size heuristic: point not evaluated");
  PhasePoint start = x;
  start.p = refresh_momentum(rng, mass);
  const double h0 = hamiltonian(start, mass);
  const double log_half = std::log(0.5);
  auto log_ratio = [&](double eps) {
    const double h1 = hamiltonian(leapfrog(start, eps, mass, model), mass);
    return std::isfinite(h1) ? h0 - h1 : -kInf;
  };
  double eps = eps_start;
  double lr = log_ratio(eps);
  const int direction = lr > log_half ? 1 : -1;
  for (int i = 0; i < 100; ++i) {
    if (direction == 1 ? !(lr > log_half) : !(lr < log_half)) break;
    const double next = direction == 1 ? eps * 2.0 : eps * 0.5;
    if (next < 1e-12 || next > 1e6) break;
    eps = next;
    lr = log_ratio(eps);
  }
  return eps;
}

MassMatrix estimate_diag_mass(const Matrix& draws) {
  if (draws.rows() < 50) throw std::invalid_argument("mass estimate: need at least 50 draws");
  const double n = static_cast<double>(draws.rows());
  Vector inv(draws.cols());
  for (Index j = 0; j < draws.cols(); ++j) {
    const double mean = draws.col(j).mean();
    const double var = (draws.col(j).array() - mean).square().sum() / (n - 1.0);
    inv[j] = (std::isfinite(var) && var > 0.0) ? 0.9 * var + 0.1 : 1.0;
  }
  return MassMatrix::from_inverse(inv);
}

void WarmupPlan::validate() const {
  if (n_warmup < 0) throw std::invalid_argument("warmup: n_warmup must be >= 0");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("warmup: target_accept must be in (0, 1)");
  if (!(integration_time > 0.0) || !std::isfinite(integration_time))
    throw std::invalid_argument("warmup: integration_time must be > 0");
  if (init_buffer < 0 || term_buffer < 0) throw std::invalid_argument("warmup: buffers must be >= 0");
  if (base_window < 50) throw std::invalid_argument("warmup: base_window must be >= 50");
  if (!(da_gamma > 0.0) || !std::isfinite(da_gamma)) throw std::invalid_argument("warmup: da_gamma must be > 0");
  if (max_steps < 1) throw std::invalid_argument("warmup: max_steps must be >= 1");
}

std::vector<std::pair<long, long>> WarmupPlan::mass_windows() const {
  std::vector<std::pair<long, long>> out;
  if (!adapt_mass || n_warmup < init_buffer + term_buffer + base_window) return out;
  const long end_slow = n_warmup - term_buffer;
  long start = init_buffer;
  long size = base_window;
  while (start < end_slow) {
    long end = start + size;
    if (end + 2 * size > end_slow) end = end_slow;
    out.emplace_back(start, end);
    start = end;
    size *= 2;
  }
  return out;
}

WarmupResult run_warmup(Rng& rng, PhasePoint& x, const WarmupPlan& plan, const TargetModel& model) {
  plan.validate();
  ensure_evaluated(x, model);
  WarmupResult out;
  out.mass = MassMatrix::identity(model.dim());
  double eps = find_reasonable_step_size(rng, x, out.mass, model);
  DualAveraging da(plan.target_accept, plan.da_gamma);
  da.restart(eps);

  const auto windows = plan.mass_windows();
  std::size_t w = 0;
  std::vector<Vector> buffer;
  double accept_sum = 0.0;

  DrConfig c;
  c.k_max = 1;
  for (long i = 0; i < plan.n_warmup; ++i) {
    c.eps0 = eps;
    c.n_steps = std::clamp(std::lround(plan.integration_time / eps), 1L, plan.max_steps);
    c.mass = out.mass;
    TransitionResult t = hmc_transition(rng, x, c, model);
    x = std::move(t.next);
    accept_sum += t.accept_stat;
    eps = da.update(t.accept_stat);

    if (w < windows.size() && i >= windows[w].first) {
      buffer.push_back(x.q);
      if (i + 1 == windows[w].second) {
        Matrix m(static_cast<Index>(buffer.size()), model.dim());
        for (std::size_t r = 0; r < buffer.size(); ++r) m.row(static_cast<Index>(r)) = buffer[r].transpose();
        out.mass = estimate_diag_mass(m);
        buffer.clear();
        ++w;
        eps = find_reasonable_step_size(rng, x, out.mass, model, eps);
        da.restart(eps);
      }
    }
  }
  out.adapted = true;
  out.iterations = plan.n_warmup;
  out.step_size = da.iterations() > 0 ? da.averaged() : eps;
  out.mean_accept = plan.n_warmup > 0 ? accept_sum / static_cast<double>(plan.n_warmup) : kNaN;
  return out;
}

}  // namespace drhmc
