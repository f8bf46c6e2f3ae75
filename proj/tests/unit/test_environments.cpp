#include "doctest.h"

#include <cmath>
#include <vector>

#include "dplab/environments.hpp"
#include "dplab/rollout.hpp"

using namespace dplab;

namespace {

// Expected newsvendor cost by composite Simpson quadrature over the uniform
// noise, split at the kink so each piece is integrated exactly.
double quadrature_cost(double a, double m, double e, double h, double l) {
  auto cost = [&](double u) {
    const double d = m + u;
    return h * std::max(a - d, 0.0) + l * std::max(d - a, 0.0);
  };
  auto simpson = [&](double lo, double hi) {
    if (hi <= lo) return 0.0;
    const int n = 64;
    const double step = (hi - lo) / n;
    double s = cost(lo) + cost(hi);
    for (int i = 1; i < n; ++i) s += cost(lo + i * step) * (i % 2 == 1 ? 4.0 : 2.0);
    return s * step / 3.0;
  };
  const double kink = std::clamp(a - m, 0.0, e);
  return (simpson(0.0, kink) + simpson(kink, e)) / e;
}

Environment newsvendor(double wx, double eps, double h) {
  Environment env;
  env.family = Family::Newsvendor;
  env.w = Vector::Constant(1, wx);
  env.noise_bound = eps;
  env.holding_cost = h;
  env.lost_sale_cost = 1.0;
  env.actions = ActionSpace::box(1, 0.0, kPriceCap);
  env.context = ContextLaw::constant(Vector::Ones(1));
  return env;
}

}  // namespace

TEST_CASE("MAB prior defaults to 20 arms") {
  PriorSpec prior;
  prior.family = Family::Mab;
  RngStream rng(1);
  const auto env = sample_environment(prior, rng);
  CHECK(env.arm_means.size() == 20);
  CHECK(env.actions.arms == 20);
}

TEST_CASE("finite pool draws are uniform over members") {
  PriorSpec base;
  base.family = Family::Mab;
  base.dim = 3;
  const auto prior = base.with_sampled_pool(4, RngStream(2));
  std::vector<int> counts(4, 0);
  RngStream rng(3);
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto env = sample_environment(prior, rng);
    for (std::size_t k = 0; k < 4; ++k)
      if (env.arm_means == prior.pool[k].arm_means) ++counts[k];
  }
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  for (int c : counts) CHECK(std::abs(c / static_cast<double>(n) - 0.25) < 3 * sigma);
}

TEST_CASE("linear bandit parameters lie on the unit sphere") {
  PriorSpec prior;
  prior.family = Family::LinearBandit;
  RngStream rng(4);
  for (int i = 0; i < 200; ++i) CHECK(std::abs(sample_environment(prior, rng).w.norm() - 1.0) < 1e-12);
}

TEST_CASE("infinite priors respect their parameter boxes") {
  RngStream rng(5);
  PriorSpec pricing;
  pricing.family = Family::Pricing;
  PriorSpec nv;
  nv.family = Family::Newsvendor;
  for (int i = 0; i < 200; ++i) {
    const auto p = sample_environment(pricing, rng);
    CHECK(p.w1.minCoeff() >= 0.5);
    CHECK(p.w1.maxCoeff() <= 1.5);
    CHECK(p.w2.minCoeff() >= 0.05);
    CHECK(p.w2.maxCoeff() <= 1.05);
    const auto n = sample_environment(nv, rng);
    CHECK(n.w.size() == 4);
    CHECK(n.noise_bound >= 1.0);
    CHECK(n.noise_bound <= 10.0);
    CHECK(n.holding_cost >= 0.5);
    CHECK(n.holding_cost <= 2.0);
    CHECK(n.lost_sale_cost == 1.0);
  }
}

TEST_CASE("demand_mix selects the square demand type") {
  PriorSpec prior;
  prior.family = Family::Pricing;
  prior.demand_mix = 1.0;
  RngStream rng(6);
  CHECK(sample_environment(prior, rng).demand == DemandType::Square);
  prior.demand_mix = 0.0;
  CHECK(sample_environment(prior, rng).demand == DemandType::Linear);
}

TEST_CASE("context laws") {
  RngStream rng(7);
  PriorSpec mab;
  const auto m = sample_environment(mab, rng);
  CHECK(sample_context(m, rng).size() == 0);

  PriorSpec pricing;
  pricing.family = Family::Pricing;
  const auto p = sample_environment(pricing, rng);
  const int n = 100000;
  Vector sum = Vector::Zero(6);
  for (int i = 0; i < n; ++i) sum += sample_context(p, rng);
  const double sigma = 2.5 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  for (Eigen::Index i = 0; i < 6; ++i) CHECK(std::abs(sum(i) / n - 1.25) < 3 * sigma);

  PriorSpec nv;
  nv.family = Family::Newsvendor;
  const auto e = sample_environment(nv, rng);
  for (int i = 0; i < 1000; ++i) {
    const Vector x = sample_context(e, rng);
    CHECK(x.size() == 4);
    CHECK(x.minCoeff() >= 0.0);
    CHECK(x.maxCoeff() <= 3.0);
  }
}

TEST_CASE("MAB observation noise has variance 0.2") {
  Environment env;
  env.family = Family::Mab;
  env.arm_means = Vector::Zero(2);
  env.actions = ActionSpace::discrete(2);
  RngStream rng(8);
  const int n = 100000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double o = sample_observation(env, Vector(), arm_vector(0), rng)(0);
    s += o;
    ss += o * o;
  }
  const double mean = s / n;
  const double var = (ss - n * mean * mean) / (n - 1);
  const double sigma = 0.2 * std::sqrt(2.0 / (n - 1));
  CHECK(std::abs(var - 0.2) < 3 * sigma);
}

TEST_CASE("pricing demand without noise and newsvendor demand support") {
  Environment p;
  p.family = Family::Pricing;
  p.w1 = Vector::Constant(1, 2.0);
  p.w2 = Vector::Constant(1, 1.0);
  p.noise_variance = 0.0;
  p.actions = ActionSpace::box(1, 0.0, kPriceCap);
  RngStream rng(9);
  const Vector x = Vector::Ones(1);
  CHECK(sample_observation(p, x, Vector::Ones(1), rng)(0) == 1.0);
  CHECK(optimal_action(p, x)(0) == 1.0);
  CHECK(expected_reward(p, x, Vector::Ones(1)) == 1.0);

  const auto nv = newsvendor(3.0, 2.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double d = sample_observation(nv, x, Vector::Ones(1), rng)(0);
    CHECK(d >= 3.0);
    CHECK(d <= 5.0);
  }
}

TEST_CASE("closed-form optimal actions") {
  const auto nv = newsvendor(3.0, 3.0, 0.5);
  CHECK(optimal_action(nv, Vector::Ones(1))(0) == doctest::Approx(5.0).epsilon(1e-15));

  Environment lb;
  lb.family = Family::LinearBandit;
  lb.w = Vector::Unit(2, 0);
  lb.actions = ActionSpace::ball(2);
  CHECK(expected_reward(lb, Vector(), Vector::Unit(2, 1)) == 0.0);
  CHECK(optimal_action(lb, Vector()) == lb.w);

  Environment m;
  m.family = Family::Mab;
  m.arm_means = Vector::Constant(3, 0.5);
  m.actions = ActionSpace::discrete(3);
  CHECK(arm_of(optimal_action(m, Vector())) == 0);  // ties break low
}

TEST_CASE("pricing with a nonpositive slope is a domain error") {
  Environment p;
  p.family = Family::Pricing;
  p.w1 = Vector::Ones(1);
  p.w2 = Vector::Constant(1, -1.0);
  p.actions = ActionSpace::box(1, 0.0, kPriceCap);
  CHECK_THROWS_AS(optimal_action(p, Vector::Ones(1)), std::domain_error);
}

TEST_CASE("newsvendor optimum is the 1/(1+h) quantile and the cost matches quadrature") {
  RngStream rng(10);
  PriorSpec prior;
  prior.family = Family::Newsvendor;
  prior.demand_mix = 0.5;
  for (int i = 0; i < 100; ++i) {
    const auto env = sample_environment(prior, rng);
    const Vector x = sample_context(env, rng);
    const double m = demand_intercept(env, x);
    const double q = env.lost_sale_cost / (env.holding_cost + env.lost_sale_cost);
    // Bisection on the demand CDF F(a) = (a - m) / eps.
    double lo = m, hi = m + env.noise_bound;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      ((mid - m) / env.noise_bound < q ? lo : hi) = mid;
    }
    const double a_star = unconstrained_optimal_action(env, x)(0);
    CHECK(std::abs(a_star - 0.5 * (lo + hi)) < 1e-9);
  }
  for (int i = 0; i < 100; ++i) {
    const auto env = sample_environment(prior, rng);
    const Vector x = sample_context(env, rng);
    const double m = demand_intercept(env, x);
    const double a = rng.uniform(0.0, kPriceCap);
    const double closed = newsvendor_expected_cost(a, m, env.noise_bound, env.holding_cost, env.lost_sale_cost);
    const double quad = quadrature_cost(a, m, env.noise_bound, env.holding_cost, env.lost_sale_cost);
    CHECK(std::abs(closed - quad) < 1e-8);
    CHECK(expected_reward(env, x, Vector::Constant(1, a)) == doctest::Approx(-closed).epsilon(1e-15));
  }
}

TEST_CASE("optimal actions dominate random perturbations") {
  for (Family fam : {Family::Mab, Family::LinearBandit, Family::Pricing, Family::Newsvendor}) {
    PriorSpec prior;
    prior.family = fam;
    if (fam == Family::Pricing || fam == Family::Newsvendor) prior.demand_mix = 0.5;
    RngStream rng(11);
    for (int i = 0; i < 1000; ++i) {
      const auto env = sample_environment(prior, rng);
      const Vector x = sample_context(env, rng);
      const Vector a_star = optimal_action(env, x);
      const double best = expected_reward(env, x, a_star);
      UniformRandomPolicy random(env.actions);
      History h;
      h.reveal(x);
      for (int j = 0; j < 50; ++j) CHECK(best >= expected_reward(env, x, random.act(h, rng)) - 1e-12);
    }
  }
}

TEST_CASE("pricing revenue is quadratic with its vertex at the optimal action") {
  PriorSpec prior;
  prior.family = Family::Pricing;
  RngStream rng(12);
  for (int i = 0; i < 200; ++i) {
    const auto env = sample_environment(prior, rng);
    const Vector x = sample_context(env, rng);
    auto r = [&](double a) { return expected_reward(env, x, Vector::Constant(1, a)); };
    // r(a) = I a - s a^2 recovered from three evaluations.
    const double r1 = r(1.0), r2 = r(2.0);
    const double s = (2.0 * r1 - r2) / 2.0;
    const double intercept = r1 + s;
    const double a_star = optimal_action(env, x)(0);
    if (a_star < kPriceCap) CHECK(std::abs(intercept / (2.0 * s) - a_star) < 1e-12 * std::max(1.0, a_star));
    CHECK(std::abs(r(0.0)) == 0.0);
  }
}

TEST_CASE("square-demand optimal price satisfies the first-order condition") {
  PriorSpec prior;
  prior.family = Family::Pricing;
  prior.demand_mix = 1.0;
  RngStream rng(13);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    const auto env = sample_environment(prior, rng);
    const Vector x = sample_context(env, rng);
    const double a = unconstrained_optimal_action(env, x)(0);
    if (a > kPriceCap - 1.0) continue;
    auto r = [&](double p) { return expected_reward(env, x, Vector::Constant(1, p)); };
    // A unit-step central difference is exact for a quadratic.
    const double deriv = (r(a + 1.0) - r(a - 1.0)) / 2.0;
    CHECK(std::abs(deriv) < 1e-10 * std::max(1.0, std::abs(r(a))));
    ++checked;
  }
  CHECK(checked > 10);
}

TEST_CASE("prior validation") {
  PriorSpec p;
  p.family = Family::Mab;
  p.demand_mix = 0.5;
  CHECK_THROWS(p.validate());
  PriorSpec q;
  q.mode = PriorSpec::Mode::FinitePool;
  CHECK_THROWS(q.validate());
}
