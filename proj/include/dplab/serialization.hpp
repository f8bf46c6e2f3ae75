#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dplab/core.hpp"
#include "dplab/environments.hpp"

namespace dplab {

using Json = nlohmann::json;

/// Thrown for schema violations; the message names the offending field.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejects any key of `obj` not in `allowed`. `where` prefixes the message.
void require_known_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                        std::string_view where);

Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

Json to_json(const ActionSpace& s);
ActionSpace action_space_from_json(const Json& j);
Json to_json(const ContextLaw& c);
ContextLaw context_law_from_json(const Json& j);

/// Environment schema, per family:
///   mab:           {"family","noise_variance","arm_means"}
///   linear-bandit: {"family","noise_variance","w"}
///   pricing:       {"family","noise_variance","w1","w2","demand_type"}
///   newsvendor:    {"family","w","noise_bound","holding_cost","lost_sale_cost","demand_type"}
/// plus optional "context" and "actions" objects (family defaults when absent).
Json to_json(const Environment& env);
Environment environment_from_json(const Json& j);

/// {"family","mode":"infinite"|"pool","dim","demand_mix","noise_variance","pool":[env...]}.
/// In pool mode "pool" may be replaced by {"pool_size": n, "pool_seed": s}, which samples
/// the pool from the infinite prior.
Json to_json(const PriorSpec& p);
PriorSpec prior_from_json(const Json& j);

/// One labelled sequence: the trajectory, the environment that generated it,
/// its seed and the tag of the behaviour policy that chose the actions.
struct TrajectoryRecord {
  Environment env;
  std::uint64_t seed = 0;
  Trajectory trajectory;
  std::string generator;  // "f" or "policy"; empty for plain rollouts
};

/// {"family","gamma":{...},"seed","steps":[{"x","a","o","a_star"}],"projections"[,"generator"]}
Json to_json(const TrajectoryRecord& r);
TrajectoryRecord trajectory_from_json(const Json& j);

}  // namespace dplab
