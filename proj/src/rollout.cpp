#include "dplab/rollout.hpp"

#include <cmath>
#include <stdexcept>

namespace dplab {

Trajectory rollout(const Environment& env, Policy& policy, int horizon, const RngStream& rng) {
  if (horizon < 1) throw std::invalid_argument("rollout horizon must be >= 1");
  RngStream context_rng = rng.derive("context");
  RngStream noise_rng = rng.derive("noise");
  RngStream policy_rng = rng.derive("policy");

  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(horizon));
  History history;
  for (int t = 1; t <= horizon; ++t) {
    Vector x = sample_context(env, context_rng);
    history.reveal(x);
    bool moved = false;
    Vector a = env.actions.project(policy.act(history, policy_rng), &moved);
    if (moved) ++traj.projections;
    Vector o = sample_observation(env, x, a, noise_rng);
    Vector a_star = optimal_action(env, x);
    history.append(a, o);
    traj.steps.push_back(StepRecord{std::move(x), std::move(a), std::move(o), std::move(a_star)});
  }
  return traj;
}

double step_regret(const Environment& env, const Vector& context, const Vector& action) {
  const double gap = expected_reward(env, context, optimal_action(env, context)) -
                     expected_reward(env, context, action);
  // a* maximizes r over A, so negative gaps are rounding noise.
  return gap > 0.0 ? gap : 0.0;
}

std::vector<double> cumulative_expected_regret(const Trajectory& trajectory, const Environment& env) {
  std::vector<double> out;
  out.reserve(trajectory.steps.size());
  double acc = 0.0;
  for (const auto& step : trajectory.steps) {
    acc += step_regret(env, step.context, step.action);
    out.push_back(acc);
  }
  return out;
}

Vector UniformRandomPolicy::act(const History&, RngStream& rng) {
  switch (space_.kind) {
    case ActionSpace::Kind::Discrete:
      return arm_vector(static_cast<int>(rng.uniform_index(static_cast<std::size_t>(space_.arms))));
    case ActionSpace::Kind::Box: {
      Vector a(space_.dim);
      for (int i = 0; i < space_.dim; ++i) a(i) = rng.uniform(space_.low, space_.high);
      return a;
    }
    case ActionSpace::Kind::Ball: {
      Vector g(space_.dim);
      for (int i = 0; i < space_.dim; ++i) g(i) = rng.normal();
      const double n = g.norm();
      const double r = space_.radius * std::pow(rng.uniform(), 1.0 / space_.dim);
      return n > 0.0 ? Vector(g * (r / n)) : Vector(Vector::Zero(space_.dim));
    }
  }
  return space_.midpoint();
}

}  // namespace dplab
