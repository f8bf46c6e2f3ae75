#include "dplab/environments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dplab {

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Mab:
      return "mab";
    case Family::LinearBandit:
      return "linear-bandit";
    case Family::Pricing:
      return "pricing";
    case Family::Newsvendor:
      return "newsvendor";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  if (name == "mab") return Family::Mab;
  if (name == "linear-bandit" || name == "linear_bandit") return Family::LinearBandit;
  if (name == "pricing") return Family::Pricing;
  if (name == "newsvendor") return Family::Newsvendor;
  throw std::invalid_argument("unknown family '" + std::string(name) +
                              "' (expected mab|linear-bandit|pricing|newsvendor)");
}

std::string_view demand_name(DemandType d) { return d == DemandType::Linear ? "linear" : "square"; }

DemandType parse_demand(std::string_view name) {
  if (name == "linear") return DemandType::Linear;
  if (name == "square") return DemandType::Square;
  throw std::invalid_argument("unknown demand type '" + std::string(name) + "'");
}

ContextLaw ContextLaw::uniform_box(int dim, double low, double high) {
  ContextLaw c;
  c.kind = Kind::UniformBox;
  c.dim = dim;
  c.low = low;
  c.high = high;
  return c;
}

ContextLaw ContextLaw::constant(Vector value) {
  ContextLaw c;
  c.kind = Kind::Constant;
  c.dim = static_cast<int>(value.size());
  c.value = std::move(value);
  return c;
}

int PriorSpec::resolved_dim() const {
  if (dim > 0) return dim;
  switch (family) {
    case Family::Mab:
      return kDefaultArms;
    case Family::LinearBandit:
      return kLinearBanditDim;
    case Family::Pricing:
      return kPricingContextDim;
    case Family::Newsvendor:
      return kNewsvendorContextDim;
  }
  return 1;
}

ActionSpace PriorSpec::action_space() const {
  if (mode == Mode::FinitePool && !pool.empty()) return pool.front().actions;
  switch (family) {
    case Family::Mab:
      return ActionSpace::discrete(resolved_dim());
    case Family::LinearBandit:
      return ActionSpace::ball(resolved_dim());
    case Family::Pricing:
    case Family::Newsvendor:
      return ActionSpace::box(1, 0.0, kPriceCap);
  }
  return {};
}

int PriorSpec::context_dim() const {
  if (mode == Mode::FinitePool && !pool.empty()) return pool.front().context_dim();
  return (family == Family::Pricing || family == Family::Newsvendor) ? resolved_dim() : 0;
}

namespace {

bool same_shape(const Environment& a, const Environment& b) {
  return a.family == b.family && a.context_dim() == b.context_dim() &&
         a.actions.kind == b.actions.kind && a.actions.dim == b.actions.dim &&
         a.actions.arms == b.actions.arms;
}

}  // namespace

void PriorSpec::validate() const {
  if (!(demand_mix >= 0.0 && demand_mix <= 1.0))
    throw std::invalid_argument("demand_mix must lie in [0,1]");
  if ((family == Family::Mab || family == Family::LinearBandit) && demand_mix != 0.0)
    throw std::invalid_argument("demand_mix must be 0 for bandit families");
  if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise_variance must be nonnegative");
  if (dim < 0) throw std::invalid_argument("dim must be nonnegative");
  if (mode == Mode::FinitePool) {
    if (pool.empty()) throw std::invalid_argument("finite pool must be non-empty");
    for (const auto& env : pool) {
      if (env.family != family) throw std::invalid_argument("pool member has a different family");
      if (!same_shape(env, pool.front()))
        throw std::invalid_argument("pool members must share dimensions");
    }
  }
}

PriorSpec PriorSpec::with_sampled_pool(std::size_t size, RngStream rng) const {
  PriorSpec infinite = *this;
  infinite.mode = Mode::Infinite;
  infinite.pool.clear();
  PriorSpec out = infinite;
  out.mode = Mode::FinitePool;
  for (std::size_t i = 0; i < size; ++i) out.pool.push_back(sample_environment(infinite, rng));
  return out;
}

Environment sample_environment(const PriorSpec& prior, RngStream& rng) {
  if (prior.mode == PriorSpec::Mode::FinitePool) {
    if (prior.pool.empty()) throw std::invalid_argument("empty environment pool");
    return prior.pool[rng.uniform_index(prior.pool.size())];
  }
  const int d = prior.resolved_dim();
  Environment env;
  env.family = prior.family;
  env.noise_variance = prior.noise_variance;
  switch (prior.family) {
    case Family::Mab:
      env.arm_means.resize(d);
      for (int a = 0; a < d; ++a) env.arm_means(a) = rng.normal();
      env.actions = ActionSpace::discrete(d);
      env.context = ContextLaw::empty();
      break;
    case Family::LinearBandit: {
      Vector g(d);
      double n = 0.0;
      while (n < 1e-12) {
        for (int i = 0; i < d; ++i) g(i) = rng.normal();
        n = g.norm();
      }
      env.w = g / n;
      env.actions = ActionSpace::ball(d);
      env.context = ContextLaw::empty();
      break;
    }
    case Family::Pricing:
      env.w1.resize(d);
      env.w2.resize(d);
      for (int i = 0; i < d; ++i) env.w1(i) = rng.uniform(0.5, 1.5);
      for (int i = 0; i < d; ++i) env.w2(i) = rng.uniform(0.05, 1.05);
      env.demand = rng.uniform() < prior.demand_mix ? DemandType::Square : DemandType::Linear;
      env.actions = ActionSpace::box(1, 0.0, kPriceCap);
      env.context = ContextLaw::uniform_box(d, 0.0, 2.5);
      break;
    case Family::Newsvendor:
      env.w.resize(d);
      for (int i = 0; i < d; ++i) env.w(i) = rng.uniform(0.0, 3.0);
      env.noise_bound = rng.uniform(1.0, 10.0);
      env.holding_cost = rng.uniform(0.5, 2.0);
      env.lost_sale_cost = 1.0;
      env.demand = rng.uniform() < prior.demand_mix ? DemandType::Square : DemandType::Linear;
      env.actions = ActionSpace::box(1, 0.0, kPriceCap);
      env.context = ContextLaw::uniform_box(d, 0.0, 3.0);
      break;
  }
  return env;
}

Vector sample_context(const Environment& env, RngStream& rng) {
  switch (env.context.kind) {
    case ContextLaw::Kind::Empty:
      return Vector(0);
    case ContextLaw::Kind::Constant:
      return env.context.value;
    case ContextLaw::Kind::UniformBox: {
      Vector x(env.context.dim);
      for (int i = 0; i < env.context.dim; ++i) x(i) = rng.uniform(env.context.low, env.context.high);
      return x;
    }
  }
  return Vector(0);
}

double demand_intercept(const Environment& env, const Vector& context) {
  const double lin = env.family == Family::Pricing ? env.w1.dot(context) : env.w.dot(context);
  return env.demand == DemandType::Square ? lin * lin : lin;
}

double price_slope(const Environment& env, const Vector& context) { return env.w2.dot(context); }

Vector sample_observation(const Environment& env, const Vector& context, const Vector& action,
                          RngStream& rng) {
  Vector o(1);
  switch (env.family) {
    case Family::Mab:
      o(0) = env.arm_means(arm_of(action)) + std::sqrt(env.noise_variance) * rng.normal();
      break;
    case Family::LinearBandit:
      o(0) = env.w.dot(action) + std::sqrt(env.noise_variance) * rng.normal();
      break;
    case Family::Pricing:
      o(0) = demand_intercept(env, context) - price_slope(env, context) * action(0) +
             std::sqrt(env.noise_variance) * rng.normal();
      break;
    case Family::Newsvendor:
      o(0) = demand_intercept(env, context) + env.noise_bound * rng.uniform();
      break;
  }
  return o;
}

Vector unconstrained_optimal_action(const Environment& env, const Vector& context) {
  switch (env.family) {
    case Family::Mab: {
      Eigen::Index best = 0;
      for (Eigen::Index a = 1; a < env.arm_means.size(); ++a) {
        if (env.arm_means(a) > env.arm_means(best)) best = a;
      }
      return arm_vector(static_cast<int>(best));
    }
    case Family::LinearBandit:
      return env.w;
    case Family::Pricing: {
      const double slope = price_slope(env, context);
      if (!(slope > 0.0)) throw std::domain_error("pricing optimum undefined for w2^T X <= 0");
      return Vector::Constant(1, demand_intercept(env, context) / (2.0 * slope));
    }
    case Family::Newsvendor: {
      const double q = env.lost_sale_cost / (env.lost_sale_cost + env.holding_cost);
      return Vector::Constant(1, demand_intercept(env, context) + env.noise_bound * q);
    }
  }
  return Vector();
}

Vector optimal_action(const Environment& env, const Vector& context) {
  return env.actions.project(unconstrained_optimal_action(env, context));
}

double newsvendor_expected_cost(double order, double mean_base, double noise_bound, double h,
                                double l) {
  // D = m + eps, eps ~ Unif(0, e). With u = a - m:
  //   u <= 0:      l (m + e/2 - a)
  //   u >= e:      h (a - m - e/2)
  //   otherwise:   h u^2 / (2e) + l (e - u)^2 / (2e)
  const double u = order - mean_base;
  const double e = noise_bound;
  if (e <= 0.0) return u >= 0.0 ? h * u : -l * u;
  if (u <= 0.0) return l * (e / 2.0 - u);
  if (u >= e) return h * (u - e / 2.0);
  return (h * u * u + l * (e - u) * (e - u)) / (2.0 * e);
}

double expected_reward(const Environment& env, const Vector& context, const Vector& action) {
  switch (env.family) {
    case Family::Mab:
      return env.arm_means(arm_of(action));
    case Family::LinearBandit:
      return env.w.dot(action);
    case Family::Pricing: {
      const double price = action(0);
      return (demand_intercept(env, context) - price_slope(env, context) * price) * price;
    }
    case Family::Newsvendor:
      return -newsvendor_expected_cost(action(0), demand_intercept(env, context), env.noise_bound,
                                       env.holding_cost, env.lost_sale_cost);
  }
  return 0.0;
}

}  // namespace dplab
