#include "dplab/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dplab::bayes {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double mean_observation(const Environment& env, const StepRecord& step) {
  switch (env.family) {
    case Family::Mab:
      return env.arm_means(arm_of(step.action));
    case Family::LinearBandit:
      return env.w.dot(step.action);
    case Family::Pricing:
      return demand_intercept(env, step.context) - price_slope(env, step.context) * step.action(0);
    case Family::Newsvendor:
      return demand_intercept(env, step.context) + 0.5 * env.noise_bound;
  }
  return 0.0;
}

}  // namespace

std::string_view rule_name(Rule r) {
  switch (r) {
    case Rule::Sampling:
      return "sampling";
    case Rule::Averaging:
      return "averaging";
    case Rule::Median:
      return "median";
  }
  return "?";
}

Rule parse_rule(std::string_view name) {
  if (name == "sampling") return Rule::Sampling;
  if (name == "averaging") return Rule::Averaging;
  if (name == "median") return Rule::Median;
  throw std::invalid_argument("unknown rule '" + std::string(name) +
                              "' (expected sampling|averaging|median)");
}

Rule rule_for_loss(LossKind loss) {
  switch (loss) {
    case LossKind::CrossEntropy:
      return Rule::Sampling;
    case LossKind::Squared:
      return Rule::Averaging;
    case LossKind::Absolute:
      return Rule::Median;
  }
  return Rule::Sampling;
}

Rule default_rule(Family family) {
  switch (family) {
    case Family::Mab:
      return Rule::Sampling;
    case Family::Pricing:
      return Rule::Averaging;
    case Family::LinearBandit:
    case Family::Newsvendor:
      return Rule::Median;
  }
  return Rule::Sampling;
}

void check_rule_matches_loss(Rule rule, LossKind loss) {
  if (rule_for_loss(loss) != rule)
    throw std::invalid_argument("rule '" + std::string(rule_name(rule)) +
                                "' is not the Bayes-optimal rule for this loss");
}

PosteriorState PosteriorState::uniform(std::vector<Environment> pool, Temperature temperature) {
  if (pool.empty()) throw std::invalid_argument("posterior needs a non-empty pool");
  PosteriorState s;
  const auto k = static_cast<Eigen::Index>(pool.size());
  s.pool = std::move(pool);
  s.log_prior = Vector::Constant(k, -std::log(static_cast<double>(k)));
  s.log_weights = s.log_prior;
  s.temperature = temperature;
  return s;
}

Vector PosteriorState::weights() const {
  const double top = log_weights.maxCoeff();
  // Scalar std::exp: Eigen's vectorized exp clamps its input, so exp(-inf) would not be 0.
  Vector w = (log_weights.array() - top).unaryExpr([](double v) { return std::exp(v); }).matrix();
  return w / w.sum();
}

double log_likelihood(const Environment& env, const StepRecord& step, Temperature temperature) {
  const double o = step.observation(0);
  if (env.family == Family::Newsvendor) {
    const double r = o - demand_intercept(env, step.context);
    const double tol = 1e-9 * std::max(1.0, std::abs(o));
    if (r < -tol || r > env.noise_bound + tol) return kNegInf;
    return -std::log(env.noise_bound);
  }
  const double mu = mean_observation(env, step);
  const double var = env.noise_variance;
  const double sq = (o - mu) * (o - mu);
  if (var <= 0.0) return sq == 0.0 ? 0.0 : kNegInf;
  if (temperature == Temperature::Literal) return -sq / var;
  return -sq / (2.0 * var) - 0.5 * std::log(2.0 * std::numbers::pi * var);
}

PosteriorState posterior_update(const PosteriorState& state, const StepRecord& step) {
  PosteriorState next = state;
  bool any_feasible = false;
  for (std::size_t i = 0; i < next.pool.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    next.log_weights(idx) += log_likelihood(next.pool[i], step, next.temperature);
    if (next.log_weights(idx) > kNegInf) any_feasible = true;
  }
  if (!any_feasible) {
    next.log_weights = next.log_prior;
    next.reset_to_prior = true;
  }
  return next;
}

Vector batch_posterior(const std::vector<Environment>& pool, const Vector& log_prior,
                       std::span<const StepRecord> steps, Temperature temperature) {
  Vector lw = log_prior;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    double s = 0.0;
    for (const auto& step : steps) s += log_likelihood(pool[i], step, temperature);
    lw(static_cast<Eigen::Index>(i)) += s;
  }
  const double top = lw.maxCoeff();
  Vector w = (lw.array() - top).unaryExpr([](double v) { return std::exp(v); }).matrix();
  return w / w.sum();
}

double posterior_median(std::span<const double> values, std::span<const double> weights) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double cumulative = 0.0;
  for (std::size_t idx : order) {
    cumulative += weights[idx];
    // Tolerance absorbs rounding in the normalized weights.
    if (cumulative >= 0.5 - 1e-12) return values[idx];
  }
  return values[order.back()];
}

Vector alg_star_act(const PosteriorState& state, const Vector& context, Rule rule, RngStream& rng) {
  const Vector w = state.weights();
  std::vector<Vector> actions;
  actions.reserve(state.pool.size());
  for (const auto& env : state.pool) actions.push_back(optimal_action(env, context));
  const ActionSpace& space = state.pool.front().actions;

  switch (rule) {
    case Rule::Sampling: {
      std::vector<double> ws(w.data(), w.data() + w.size());
      return actions[rng.categorical(ws)];
    }
    case Rule::Averaging: {
      if (space.kind == ActionSpace::Kind::Discrete)
        throw std::invalid_argument("posterior averaging is undefined for arm-valued actions");
      Vector a = Vector::Zero(actions.front().size());
      for (std::size_t i = 0; i < actions.size(); ++i) a += w(static_cast<Eigen::Index>(i)) * actions[i];
      return space.project(a);
    }
    case Rule::Median: {
      if (space.kind == ActionSpace::Kind::Discrete)
        throw std::invalid_argument("posterior median is undefined for arm-valued actions");
      const auto dim = actions.front().size();
      Vector a(dim);
      std::vector<double> values(actions.size());
      std::vector<double> ws(w.data(), w.data() + w.size());
      for (Eigen::Index c = 0; c < dim; ++c) {
        for (std::size_t i = 0; i < actions.size(); ++i) values[i] = actions[i](c);
        a(c) = posterior_median(values, ws);
      }
      return space.project(a);
    }
  }
  return space.midpoint();
}

Vector alg_star_act(const PosteriorState& state, const Vector& context, Rule rule, LossKind loss,
                    RngStream& rng) {
  check_rule_matches_loss(rule, loss);
  return alg_star_act(state, context, rule, rng);
}

AlgStarPolicy::AlgStarPolicy(std::vector<Environment> pool, Rule rule, Temperature temperature)
    : state_(PosteriorState::uniform(std::move(pool), temperature)), rule_(rule) {
  if (rule_ != Rule::Sampling && state_.pool.front().actions.kind == ActionSpace::Kind::Discrete)
    throw std::invalid_argument("only posterior sampling is defined for arm-valued actions");
}

Vector AlgStarPolicy::act(const History& history, RngStream& rng) {
  const auto& steps = history.steps();
  for (; seen_ < steps.size(); ++seen_) state_ = posterior_update(state_, steps[seen_]);
  return alg_star_act(state_, history.pending_context(), rule_, rng);
}

CounterexampleKind parse_counterexample(std::string_view name) {
  if (name == "linear-bandit" || name == "linear_bandit") return CounterexampleKind::LinearBandit;
  if (name == "pricing") return CounterexampleKind::Pricing;
  throw std::invalid_argument("unknown counterexample kind '" + std::string(name) +
                              "' (expected linear-bandit|pricing)");
}

Counterexample counterexample_instance(CounterexampleKind kind) {
  Counterexample ce;
  ce.prior.mode = PriorSpec::Mode::FinitePool;
  ce.prior.noise_variance = 1.0;
  if (kind == CounterexampleKind::LinearBandit) {
    ce.prior.family = Family::LinearBandit;
    ce.prior.dim = 2;
    for (int i = 0; i < 2; ++i) {
      Environment env;
      env.family = Family::LinearBandit;
      env.w = Vector::Unit(2, i);
      env.noise_variance = 1.0;
      env.actions = ActionSpace::ball(2);
      env.context = ContextLaw::empty();
      ce.prior.pool.push_back(env);
    }
    ce.per_step_regret = {0.5, 0.5};
  } else {
    ce.prior.family = Family::Pricing;
    ce.prior.dim = 1;
    const double intercepts[2] = {2.0, 0.8};
    const double slopes[2] = {1.0, 0.2};
    for (int i = 0; i < 2; ++i) {
      Environment env;
      env.family = Family::Pricing;
      env.w1 = Vector::Constant(1, intercepts[i]);
      env.w2 = Vector::Constant(1, slopes[i]);
      env.demand = DemandType::Linear;
      env.noise_variance = 1.0;
      env.actions = ActionSpace::box(1, 0.0, kPriceCap);
      env.context = ContextLaw::constant(Vector::Constant(1, 1.0));
      ce.prior.pool.push_back(env);
    }
    ce.per_step_regret = {0.25, 0.05};
  }
  ce.prior.validate();
  return ce;
}

std::vector<double> concentration_curve(const Trajectory& trajectory,
                                        const std::vector<Environment>& pool,
                                        std::size_t true_index, Temperature temperature) {
  if (true_index >= pool.size()) throw std::invalid_argument("true environment not in pool");
  auto state = PosteriorState::uniform(pool, temperature);
  std::vector<double> out;
  out.reserve(trajectory.steps.size() + 1);
  auto off_mass = [&](const PosteriorState& s) {
    return 1.0 - s.weights()(static_cast<Eigen::Index>(true_index));
  };
  out.push_back(off_mass(state));
  for (const auto& step : trajectory.steps) {
    state = posterior_update(state, step);
    out.push_back(off_mass(state));
  }
  return out;
}

}  // namespace dplab::bayes
