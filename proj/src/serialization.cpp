#include "dplab/serialization.hpp"

#include <algorithm>

namespace dplab {

void require_known_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                        std::string_view where) {
  if (!obj.is_object()) throw SchemaError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw SchemaError(std::string(where) + ": unknown field '" + key + "'");
  }
}

Json vector_to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw SchemaError("expected a numeric array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaError("expected a numeric array");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Json to_json(const ActionSpace& s) {
  switch (s.kind) {
    case ActionSpace::Kind::Discrete:
      return Json{{"kind", "discrete"}, {"arms", s.arms}};
    case ActionSpace::Kind::Box:
      return Json{{"kind", "box"}, {"dim", s.dim}, {"low", s.low}, {"high", s.high}};
    case ActionSpace::Kind::Ball:
      return Json{{"kind", "ball"}, {"dim", s.dim}, {"radius", s.radius}};
  }
  return {};
}

ActionSpace action_space_from_json(const Json& j) {
  require_known_keys(j, {"kind", "arms", "dim", "low", "high", "radius"}, "actions");
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "discrete") return ActionSpace::discrete(j.at("arms").get<int>());
  if (kind == "box")
    return ActionSpace::box(j.value("dim", 1), j.at("low").get<double>(), j.at("high").get<double>());
  if (kind == "ball") return ActionSpace::ball(j.at("dim").get<int>(), j.value("radius", 1.0));
  throw SchemaError("actions: unknown kind '" + kind + "'");
}

Json to_json(const ContextLaw& c) {
  switch (c.kind) {
    case ContextLaw::Kind::Empty:
      return Json{{"kind", "empty"}};
    case ContextLaw::Kind::UniformBox:
      return Json{{"kind", "uniform"}, {"dim", c.dim}, {"low", c.low}, {"high", c.high}};
    case ContextLaw::Kind::Constant:
      return Json{{"kind", "constant"}, {"value", vector_to_json(c.value)}};
  }
  return {};
}

ContextLaw context_law_from_json(const Json& j) {
  require_known_keys(j, {"kind", "dim", "low", "high", "value"}, "context");
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "empty") return ContextLaw::empty();
  if (kind == "uniform")
    return ContextLaw::uniform_box(j.at("dim").get<int>(), j.at("low").get<double>(),
                                   j.at("high").get<double>());
  if (kind == "constant") return ContextLaw::constant(vector_from_json(j.at("value")));
  throw SchemaError("context: unknown kind '" + kind + "'");
}

Json to_json(const Environment& env) {
  Json j;
  j["family"] = family_name(env.family);
  switch (env.family) {
    case Family::Mab:
      j["noise_variance"] = env.noise_variance;
      j["arm_means"] = vector_to_json(env.arm_means);
      break;
    case Family::LinearBandit:
      j["noise_variance"] = env.noise_variance;
      j["w"] = vector_to_json(env.w);
      break;
    case Family::Pricing:
      j["noise_variance"] = env.noise_variance;
      j["w1"] = vector_to_json(env.w1);
      j["w2"] = vector_to_json(env.w2);
      j["demand_type"] = demand_name(env.demand);
      break;
    case Family::Newsvendor:
      j["w"] = vector_to_json(env.w);
      j["noise_bound"] = env.noise_bound;
      j["holding_cost"] = env.holding_cost;
      j["lost_sale_cost"] = env.lost_sale_cost;
      j["demand_type"] = demand_name(env.demand);
      break;
  }
  j["context"] = to_json(env.context);
  j["actions"] = to_json(env.actions);
  return j;
}

Environment environment_from_json(const Json& j) {
  require_known_keys(j,
                     {"family", "noise_variance", "arm_means", "w", "w1", "w2", "demand_type",
                      "noise_bound", "holding_cost", "lost_sale_cost", "context", "actions"},
                     "environment");
  Environment env;
  env.family = parse_family(j.at("family").get<std::string>());
  env.noise_variance = j.value("noise_variance", kDefaultNoiseVariance);
  if (j.contains("demand_type")) env.demand = parse_demand(j.at("demand_type").get<std::string>());
  switch (env.family) {
    case Family::Mab:
      env.arm_means = vector_from_json(j.at("arm_means"));
      env.actions = ActionSpace::discrete(static_cast<int>(env.arm_means.size()));
      env.context = ContextLaw::empty();
      break;
    case Family::LinearBandit:
      env.w = vector_from_json(j.at("w"));
      env.actions = ActionSpace::ball(static_cast<int>(env.w.size()));
      env.context = ContextLaw::empty();
      break;
    case Family::Pricing:
      env.w1 = vector_from_json(j.at("w1"));
      env.w2 = vector_from_json(j.at("w2"));
      if (env.w1.size() != env.w2.size()) throw SchemaError("environment: w1 and w2 differ in size");
      env.actions = ActionSpace::box(1, 0.0, kPriceCap);
      env.context = ContextLaw::uniform_box(static_cast<int>(env.w1.size()), 0.0, 2.5);
      break;
    case Family::Newsvendor:
      env.w = vector_from_json(j.at("w"));
      env.noise_bound = j.at("noise_bound").get<double>();
      env.holding_cost = j.at("holding_cost").get<double>();
      env.lost_sale_cost = j.value("lost_sale_cost", 1.0);
      env.actions = ActionSpace::box(1, 0.0, kPriceCap);
      env.context = ContextLaw::uniform_box(static_cast<int>(env.w.size()), 0.0, 3.0);
      break;
  }
  if (j.contains("context")) env.context = context_law_from_json(j.at("context"));
  if (j.contains("actions")) env.actions = action_space_from_json(j.at("actions"));
  return env;
}

Json to_json(const PriorSpec& p) {
  Json j;
  j["family"] = family_name(p.family);
  j["mode"] = p.mode == PriorSpec::Mode::Infinite ? "infinite" : "pool";
  j["dim"] = p.dim;
  j["demand_mix"] = p.demand_mix;
  j["noise_variance"] = p.noise_variance;
  if (p.mode == PriorSpec::Mode::FinitePool) {
    Json pool = Json::array();
    for (const auto& env : p.pool) pool.push_back(to_json(env));
    j["pool"] = pool;
  }
  return j;
}

PriorSpec prior_from_json(const Json& j) {
  require_known_keys(j, {"family", "mode", "dim", "demand_mix", "noise_variance", "pool",
                         "pool_size", "pool_seed"},
                     "prior");
  PriorSpec p;
  p.family = parse_family(j.value("family", std::string("mab")));
  p.dim = j.value("dim", 0);
  p.demand_mix = j.value("demand_mix", 0.0);
  p.noise_variance = j.value("noise_variance", kDefaultNoiseVariance);
  const auto mode = j.value("mode", std::string("infinite"));
  if (mode == "infinite") {
    p.mode = PriorSpec::Mode::Infinite;
  } else if (mode == "pool") {
    if (j.contains("pool")) {
      p.mode = PriorSpec::Mode::FinitePool;
      for (const auto& e : j.at("pool")) p.pool.push_back(environment_from_json(e));
    } else {
      const auto size = j.value("pool_size", std::size_t{4});
      const auto seed = j.value("pool_seed", std::uint64_t{0});
      p = p.with_sampled_pool(size, RngStream(seed).derive("pool"));
    }
  } else {
    throw SchemaError("prior: unknown mode '" + mode + "'");
  }
  p.validate();
  return p;
}

Json to_json(const TrajectoryRecord& r) {
  Json steps = Json::array();
  for (const auto& s : r.trajectory.steps) {
    Json step{{"x", vector_to_json(s.context)},
              {"a", vector_to_json(s.action)},
              {"o", vector_to_json(s.observation)}};
    step["a_star"] = s.optimal_action ? vector_to_json(*s.optimal_action) : Json::array();
    steps.push_back(std::move(step));
  }
  Json j{{"family", family_name(r.env.family)},
         {"gamma", to_json(r.env)},
         {"seed", r.seed},
         {"steps", std::move(steps)},
         {"projections", r.trajectory.projections}};
  if (!r.generator.empty()) j["generator"] = r.generator;
  return j;
}

TrajectoryRecord trajectory_from_json(const Json& j) {
  require_known_keys(j, {"family", "gamma", "seed", "steps", "projections", "generator"},
                     "trajectory");
  TrajectoryRecord r;
  r.env = environment_from_json(j.at("gamma"));
  if (parse_family(j.at("family").get<std::string>()) != r.env.family)
    throw SchemaError("trajectory: family does not match gamma");
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trajectory.projections = j.value("projections", 0);
  r.generator = j.value("generator", std::string());
  for (const auto& s : j.at("steps")) {
    require_known_keys(s, {"x", "a", "o", "a_star"}, "step");
    StepRecord step{vector_from_json(s.at("x")), vector_from_json(s.at("a")),
                    vector_from_json(s.at("o")), std::nullopt};
    if (s.contains("a_star") && !s.at("a_star").empty())
      step.optimal_action = vector_from_json(s.at("a_star"));
    r.trajectory.steps.push_back(std::move(step));
  }
  return r;
}

}  // namespace dplab
