#pragma once

#include <vector>

#include "dplab/core.hpp"
#include "dplab/environments.hpp"

namespace dplab {

/// Runs `horizon` steps of the test dynamics: X_t ~ law, a_t = policy(H_t),
/// o_t ~ P(.|X_t, a_t). Each step carries its closed-form a*_t.
///
/// Contexts, observation noise and policy randomness come from three
/// independent children of `rng` ("context", "noise", "policy"), so two
/// policies rolled out on the same stream see identical contexts and
/// identical noise draws.
Trajectory rollout(const Environment& env, Policy& policy, int horizon, const RngStream& rng);

/// Entry t is sum_{tau <= t} r(X_tau, a*_tau) - r(X_tau, a_tau).
std::vector<double> cumulative_expected_regret(const Trajectory& trajectory, const Environment& env);

/// Per-step expected regret r(X, a*) - r(X, a).
double step_regret(const Environment& env, const Vector& context, const Vector& action);

/// Plays a*_t from the true environment.
class OraclePolicy final : public Policy {
 public:
  explicit OraclePolicy(Environment env) : env_(std::move(env)) {}
  Vector act(const History& history, RngStream&) override {
    return optimal_action(env_, history.pending_context());
  }

 private:
  Environment env_;
};

class ConstantPolicy final : public Policy {
 public:
  explicit ConstantPolicy(Vector action) : action_(std::move(action)) {}
  Vector act(const History&, RngStream&) override { return action_; }

 private:
  Vector action_;
};

/// Uniform over arms, over the box, or over the ball.
class UniformRandomPolicy final : public Policy {
 public:
  explicit UniformRandomPolicy(ActionSpace space) : space_(space) {}
  Vector act(const History&, RngStream& rng) override;
  bool randomized() const override { return true; }

 private:
  ActionSpace space_;
};

}  // namespace dplab
