#include <doctest.h>

#include "drhmc/delayed_rejection.hpp"
#include "drhmc/models/funnel.hpp"
#include "drhmc/models/mixture.hpp"
#include "drhmc/models/normal.hpp"
#include "oracles.hpp"

using namespace drhmc;

namespace {

PhasePoint random_point(Rng& rng, Index d, double spread = 1.0) {
  Vector q(d), p(d);
  for (Index j = 0; j < d; ++j) {
    q[j] = spread * standard_normal(rng);
    p[j] = standard_normal(rng);
  }
  return {q, p};
}

oracle::State to_state(const PhasePoint& x) {
  return {{x.q.data(), x.q.data() + x.q.size()}, {x.p.data(), x.p.data() + x.p.size()}};
}

DrConfig make_config(Index d, double eps, long n, int k, int a) {
  DrConfig c;
  c.eps0 = eps;
  c.n_steps = n;
  c.mass = MassMatrix::identity(d);
  c.k_max = k;
  c.a = a;
  return c;
}

}  // namespace

TEST_CASE("second-stage acceptance by hand") {
  // pi(y)/pi(x) = 2, alpha_1(y) = 0.5, alpha_1(x) = 0.2
  const double det = std::log(2.0) + std::log(0.5) - std::log(0.8);
  CHECK(std::min(0.0, det) == 0.0);
  CHECK(std::exp(det) == doctest::Approx(1.25));

  const auto rule = RetryRule::one_minus_alpha();
  const double prob = det + rule.log_probability(std::log(0.5)) - rule.log_probability(std::log(0.2));
  CHECK(std::exp(prob) == doctest::Approx(0.78125).epsilon(1e-14));
}

TEST_CASE("stage-one acceptance") {
  const auto model = NormalModel::standard(1);
  const auto mass = MassMatrix::identity(1);
  PhasePoint x(Vector::Constant(1, 0.0), Vector::Constant(1, 1.0));
  PhasePoint y(Vector::Constant(1, 1.0), Vector::Constant(1, 1.0));
  ensure_evaluated(x, model);
  ensure_evaluated(y, model);
  CHECK(log_alpha1(x, y, mass) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(log_alpha1(y, x, mass) == 0.0);
  PhasePoint far(Vector::Constant(1, 50.0), Vector::Constant(1, 0.0));
  ensure_evaluated(far, model);
  CHECK(log_alpha1(x, far, mass) == -kInf);  // Delta H = 1249.5 > 1000
}

TEST_CASE("ladder acceptance matches brute-force enumeration") {
  FunnelModel funnel({3, 3.0});
  MixtureModel mixture(MixtureSpec::benchmark());
  Rng rng(21);
  for (const TargetModel* model : {static_cast<const TargetModel*>(&funnel), static_cast<const TargetModel*>(&mixture)}) {
    const Index d = model->dim();
    const oracle::Vec minv(static_cast<std::size_t>(d), 1.0);
    for (int i = 0; i < 40; ++i) {
      const auto x = random_point(rng, d, 1.0);
      const double eps = 0.2 + 0.8 * uniform01(rng);
      const int a = i % 2 ? 2 : 3;
      for (int k = 2; k <= 3; ++k) {
        const auto cfg = make_config(d, eps, 4, k, a);
        const double lib = std::exp(log_alpha_k(x, k, cfg, *model));
        const double ref = oracle::brute_force_alpha(*model, to_state(x), eps, 4, a, k, minv);
        CHECK(lib == doctest::Approx(ref).epsilon(1e-9));

        const oracle::RetryFn r = [](double alpha) { return 1.0 - alpha; };
        auto pcfg = cfg;
        pcfg.probabilistic = true;
        const double libp = std::exp(log_alpha_k_probabilistic(x, k, pcfg, *model));
        const double refp = oracle::brute_force_alpha(*model, to_state(x), eps, 4, a, k, minv, &r);
        CHECK(libp == doctest::Approx(refp).epsilon(1e-9));
      }
    }
  }
}

// Detailed balance for stage k on the joint density:
// pi(x) prod(1 - alpha_i(x)) alpha_k(x) == pi(y) prod(1 - alpha_i(y)) alpha_k(y), y = F_k(x).
TEST_CASE("stage-k acceptance satisfies detailed balance with its image") {
  FunnelModel model({2, 3.0});
  Rng rng(22);
  for (int i = 0; i < 30; ++i) {
    const auto x0 = random_point(rng, 2, 0.8);
    for (int k = 1; k <= 4; ++k) {
      const auto cfg = make_config(2, 0.6, 3, k, 2);
      ProposalLadder lx(x0, cfg, model);
      double flux_x = 0.0;
      for (int j = 1; j < k; ++j) flux_x += log1m_exp(lx.log_accept(j));
      flux_x += lx.log_accept(k) + log_joint(lx.origin(), cfg.mass);
      const PhasePoint y = lx.proposal(k);
      ProposalLadder ly(y, cfg, model);
      double flux_y = 0.0;
      for (int j = 1; j < k; ++j) flux_y += log1m_exp(ly.log_accept(j));
      flux_y += ly.log_accept(k) + log_joint(ly.origin(), cfg.mass);
      // the image of y is x
      const auto back = ly.proposal(k);
      CHECK((back.q - x0.q).norm() <= 1e-9 * (1 + x0.q.norm()));
      if (flux_x < -600 && flux_y < -600) continue;
      CHECK(flux_x == doctest::Approx(flux_y).epsilon(1e-8));
    }
  }
}

TEST_CASE("ghost tree touches 2^k points and integrates the expected step count") {
  FunnelModel model({3, 3.0});
  Rng rng(23);
  for (int k = 1; k <= 5; ++k) {
    for (int a : {2, 5}) {
      const auto cfg = make_config(3, 0.05, 3, k, a);
      auto x = random_point(rng, 3, 0.3);
      ensure_evaluated(x, model);
      model.reset_eval_count();
      ProposalLadder ladder(x, cfg, model);
      const double la = ladder.log_accept(k);
      CHECK(la <= 0.0);
      CHECK(ladder.density_points() == (std::size_t{1} << k));
      // one evaluation per leapfrog, the origin being cached
      CHECK(model.eval_count() == static_cast<std::uint64_t>(oracle::expected_leapfrogs(3, a, k)));
      CHECK(ladder.leapfrog_steps() == static_cast<std::uint64_t>(oracle::expected_leapfrogs(3, a, k)));
      const auto& rec = ladder.record(k);
      CHECK(rec.ghost_log_alpha.size() == static_cast<std::size_t>(k - 1));
    }
  }
}

TEST_CASE("asking for stages in order reuses the memo") {
  FunnelModel model({2, 3.0});
  Rng rng(24);
  auto x = random_point(rng, 2, 0.3);
  const auto cfg = make_config(2, 0.1, 5, 3, 2);
  ensure_evaluated(x, model);
  model.reset_eval_count();
  ProposalLadder ladder(x, cfg, model);
  for (int k = 1; k <= 3; ++k) ladder.log_accept(k);
  CHECK(ladder.density_points() == 8);
  CHECK(ladder.leapfrog_steps() == static_cast<std::uint64_t>(oracle::expected_leapfrogs(5, 2, 3)));
}

TEST_CASE("retry probabilities") {
  const auto rule = RetryRule::one_minus_alpha();
  CHECK(rule.log_probability(-kInf) == 0.0);
  CHECK(std::exp(rule.log_probability(std::log(0.95))) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(rule.log_probability(0.0) == -kInf);
  CHECK(RetryRule::always().log_probability(std::log(0.3)) == 0.0);
  CHECK(std::exp(RetryRule::constant(0.4).log_probability(-1.0)) == doctest::Approx(0.4));

  CHECK(RetryRule::parse("always").kind() == RetryRule::Kind::always);
  CHECK(RetryRule::parse("one-minus-alpha").kind() == RetryRule::Kind::one_minus_alpha);
  CHECK(RetryRule::parse("constant:0.25").id() == RetryRule::constant(0.25).id());
  CHECK_THROWS(RetryRule::parse("sometimes"));
  CHECK_THROWS(RetryRule::parse("constant:1.5"));

  // deterministic mode never declines; probabilistic mode uses the rule at x
  FunnelModel model({2, 3.0});
  Rng rng(25);
  const auto x = random_point(rng, 2, 0.3);
  auto cfg = make_config(2, 0.4, 4, 2, 2);
  ProposalLadder det(x, cfg, model);
  CHECK(retry_probability(1, det) == 1.0);
  cfg.probabilistic = true;
  ProposalLadder prob(x, cfg, model);
  const double a1 = std::exp(prob.log_accept(1));
  CHECK(retry_probability(1, prob) == doctest::Approx(1.0 - a1).epsilon(1e-12));
}

TEST_CASE("probabilistic acceptance with the always rule reduces to the deterministic one") {
  FunnelModel model({3, 3.0});
  Rng rng(26);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_point(rng, 3, 0.7);
    const auto det = make_config(3, 0.5, 3, 3, 2);
    auto cfg = det;
    cfg.probabilistic = true;
    cfg.retry_rule = RetryRule::always();
    for (int k = 1; k <= 3; ++k) CHECK(log_alpha_k_probabilistic(x, k, cfg, model) == log_alpha_k(x, k, det, model));
  }
}

TEST_CASE("divergent proposals are rejected outright") {
  FunnelModel model({2, 3.0});
  PhasePoint x(Vector::Zero(2), Vector::Zero(2));
  x.q[0] = -6.0;
  x.p[1] = 3.0;
  const auto cfg = make_config(2, 2.0, 20, 2, 2);
  ProposalLadder ladder(x, cfg, model);
  const double la = ladder.log_accept(1);
  if (ladder.record(1).divergent) CHECK(la == -kInf);
  for (int k = 1; k <= 2; ++k) {
    const double v = ladder.log_accept(k);
    CHECK((v <= 0.0 || v == -kInf));
    CHECK_FALSE(std::isnan(v));
  }
}

TEST_CASE("config validation and hashing") {
  auto cfg = make_config(2, 0.1, 10, 3, 2);
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.k_max = 0;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.a = 1;
  CHECK_THROWS(bad.validate());
  bad = cfg;
  bad.n_steps = 0;
  CHECK_THROWS(bad.validate());
  auto other = cfg;
  other.eps0 = 0.1000001;
  CHECK(other.hash() != cfg.hash());
  CHECK(make_config(2, 0.1, 10, 3, 2).hash() == cfg.hash());
  const auto s3 = cfg.stage_map(3);
  CHECK(s3.step_size() == doctest::Approx(0.025));
  CHECK(s3.steps() == 40);
}
