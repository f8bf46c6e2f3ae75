#include "doctest.h"

#include <cmath>

#include "dplab/core.hpp"
#include "dplab/environments.hpp"
#include "dplab/rollout.hpp"

using namespace dplab;

namespace {

Environment mab(std::initializer_list<double> means, double noise_variance) {
  Environment e;
  e.family = Family::Mab;
  e.arm_means = Vector(static_cast<Eigen::Index>(means.size()));
  Eigen::Index i = 0;
  for (double m : means) e.arm_means(i++) = m;
  e.noise_variance = noise_variance;
  e.actions = ActionSpace::discrete(static_cast<int>(means.size()));
  e.context = ContextLaw::empty();
  return e;
}

Environment linear_bandit(Vector w, double noise_variance) {
  Environment e;
  e.family = Family::LinearBandit;
  e.w = std::move(w);
  e.noise_variance = noise_variance;
  e.actions = ActionSpace::ball(static_cast<int>(e.w.size()));
  e.context = ContextLaw::empty();
  return e;
}

class OutOfRangePolicy final : public Policy {
 public:
  Vector act(const History&, RngStream&) override { return Vector::Constant(1, 45.0); }
};

}  // namespace

TEST_CASE("action space projection") {
  bool moved = false;
  const auto box = ActionSpace::box(2, 0.0, 30.0);
  Vector a(2);
  a << 31.0, -1.0;
  const Vector p = box.project(a, &moved);
  CHECK(moved);
  CHECK(p(0) == 30.0);
  CHECK(p(1) == 0.0);

  const auto ball = ActionSpace::ball(2);
  Vector b(2);
  b << 3.0, 4.0;
  const Vector q = ball.project(b, &moved);
  CHECK(moved);
  CHECK(q(0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(q(1) == doctest::Approx(0.8).epsilon(1e-15));

  const auto arms = ActionSpace::discrete(3);
  CHECK(arm_of(arms.project(arm_vector(7))) == 2);
  CHECK(arm_of(arms.project(arm_vector(1), &moved)) == 1);
  CHECK_FALSE(moved);
}

TEST_CASE("history holds t-1 completed steps plus the pending context") {
  History h;
  CHECK_FALSE(h.has_pending());
  h.reveal(Vector::Zero(0));
  CHECK(h.t() == 1);
  h.append(arm_vector(0), Vector::Constant(1, 1.0));
  CHECK_FALSE(h.has_pending());
  h.reveal(Vector::Zero(0));
  CHECK(h.t() == 2);
  CHECK(h.steps().size() == 1);
}

TEST_CASE("rollout: noiseless two-arm bandit with a constant first-arm policy") {
  const auto env = mab({1.0, 0.0}, 0.0);
  ConstantPolicy policy(arm_vector(0));
  const auto traj = rollout(env, policy, 3, RngStream(1));
  REQUIRE(traj.steps.size() == 3);
  for (const auto& s : traj.steps) {
    CHECK(s.observation(0) == 1.0);
    REQUIRE(s.optimal_action);
    CHECK(arm_of(*s.optimal_action) == 0);
  }
}

TEST_CASE("rollout: orthogonal linear-bandit action has unit regret per step") {
  Vector w(2);
  w << 1.0, 0.0;
  const auto env = linear_bandit(w, 0.2);
  Vector a(2);
  a << 0.0, 1.0;
  ConstantPolicy policy(a);
  const auto traj = rollout(env, policy, 2, RngStream(2));
  for (const auto& s : traj.steps) {
    CHECK(expected_reward(env, s.context, s.action) == 0.0);
    CHECK(step_regret(env, s.context, s.action) == 1.0);
  }
  const auto reg = cumulative_expected_regret(traj, env);
  CHECK(reg == std::vector<double>{1.0, 2.0});
}

TEST_CASE("rollout: greedy-optimal pricing policy has zero regret") {
  Environment env;
  env.family = Family::Pricing;
  env.w1 = Vector::Ones(6);
  env.w2 = 0.5 * Vector::Ones(6);
  env.actions = ActionSpace::box(1, 0.0, kPriceCap);
  env.context = ContextLaw::constant(Vector::Constant(6, 0.4));
  // Hand oracle: w1^T X = 2.4, w2^T X = 1.2, a* = 2.4 / 2.4 = 1, r = (2.4 - 1.2) * 1.
  const Vector x = Vector::Constant(6, 0.4);
  CHECK(optimal_action(env, x)(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(expected_reward(env, x, optimal_action(env, x)) == doctest::Approx(1.2).epsilon(1e-15));
  OraclePolicy policy(env);
  const auto traj = rollout(env, policy, 10, RngStream(3));
  for (double r : cumulative_expected_regret(traj, env)) CHECK(r == 0.0);
}

TEST_CASE("cumulative regret: optimal play is zero, constant gap accumulates linearly") {
  const auto env = mab({1.0, 0.0}, 0.2);
  OraclePolicy oracle(env);
  for (double r : cumulative_expected_regret(rollout(env, oracle, 20, RngStream(4)), env)) CHECK(r == 0.0);

  ConstantPolicy worst(arm_vector(1));
  const auto reg = cumulative_expected_regret(rollout(env, worst, 5, RngStream(4)), env);
  CHECK(reg == std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0});
}

TEST_CASE("cumulative regret is nonnegative and nondecreasing under random play") {
  for (Family fam : {Family::Mab, Family::LinearBandit, Family::Pricing, Family::Newsvendor}) {
    PriorSpec prior;
    prior.family = fam;
    for (std::uint64_t s = 0; s < 20; ++s) {
      RngStream rng(100 + s);
      const auto env = sample_environment(prior, rng);
      UniformRandomPolicy policy(env.actions);
      const auto reg = cumulative_expected_regret(rollout(env, policy, 30, RngStream(s)), env);
      double prev = 0.0;
      for (double r : reg) {
        CHECK(r >= prev);
        prev = r;
      }
    }
  }
}

TEST_CASE("rollout is bit-identical for identical inputs") {
  PriorSpec prior;
  prior.family = Family::Pricing;
  RngStream rng(9);
  const auto env = sample_environment(prior, rng);
  UniformRandomPolicy p1(env.actions), p2(env.actions);
  const auto a = rollout(env, p1, 25, RngStream(77));
  const auto b = rollout(env, p2, 25, RngStream(77));
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].context == b.steps[i].context);
    CHECK(a.steps[i].action == b.steps[i].action);
    CHECK(a.steps[i].observation == b.steps[i].observation);
  }
}

TEST_CASE("out-of-range actions are projected and counted") {
  Environment env;
  env.family = Family::Pricing;
  env.w1 = Vector::Ones(1);
  env.w2 = Vector::Ones(1);
  env.actions = ActionSpace::box(1, 0.0, kPriceCap);
  env.context = ContextLaw::constant(Vector::Ones(1));
  OutOfRangePolicy policy;
  const auto traj = rollout(env, policy, 4, RngStream(5));
  CHECK(traj.projections == 4);
  for (const auto& s : traj.steps) CHECK(s.action(0) == kPriceCap);
}
