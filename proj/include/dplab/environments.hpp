#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dplab/core.hpp"

namespace dplab {

enum class Family { Mab, LinearBandit, Pricing, Newsvendor };
enum class DemandType { Linear, Square };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);
std::string_view demand_name(DemandType d);
DemandType parse_demand(std::string_view name);

/// Law of the i.i.d. contexts X_t.
struct ContextLaw {
  enum class Kind { Empty, UniformBox, Constant };
  Kind kind = Kind::Empty;
  int dim = 0;
  double low = 0.0;
  double high = 0.0;
  Vector value;  // Constant only

  static ContextLaw empty() { return {}; }
  static ContextLaw uniform_box(int dim, double low, double high);
  static ContextLaw constant(Vector value);
};

/// A task instance gamma. Only the fields of its family are meaningful.
struct Environment {
  Family family = Family::Mab;
  Vector arm_means;  // Mab
  Vector w;          // LinearBandit reward vector, Newsvendor demand vector
  Vector w1, w2;     // Pricing intercept and price-sensitivity vectors
  DemandType demand = DemandType::Linear;
  double noise_bound = 0.0;   // Newsvendor: noise ~ Unif(0, noise_bound)
  double holding_cost = 0.0;  // Newsvendor h
  double lost_sale_cost = 1.0;
  double noise_variance = 0.2;  // Gaussian families
  ContextLaw context;
  ActionSpace actions;

  int context_dim() const { return context.dim; }
  int observation_dim() const { return 1; }
};

/// Default task dimensions.
inline constexpr int kDefaultArms = 20;
inline constexpr int kLinearBanditDim = 2;
inline constexpr int kPricingContextDim = 6;
inline constexpr int kNewsvendorContextDim = 4;
inline constexpr double kPriceCap = 30.0;
inline constexpr double kDefaultNoiseVariance = 0.2;

/// Environment distribution P_gamma.
struct PriorSpec {
  enum class Mode { Infinite, FinitePool };

  Family family = Family::Mab;
  Mode mode = Mode::Infinite;
  std::vector<Environment> pool;
  /// Arms for Mab, action dimension for LinearBandit, context dimension for
  /// Pricing and Newsvendor. Zero selects the family default.
  int dim = 0;
  double demand_mix = 0.0;  // probability of the square demand type
  double noise_variance = kDefaultNoiseVariance;

  int resolved_dim() const;
  void validate() const;
  /// A finite pool of `size` environments drawn i.i.d. from this (infinite) prior.
  PriorSpec with_sampled_pool(std::size_t size, RngStream rng) const;
  ActionSpace action_space() const;
  int context_dim() const;
};

Environment sample_environment(const PriorSpec& prior, RngStream& rng);
Vector sample_context(const Environment& env, RngStream& rng);
/// Consumes exactly one noise variate per call regardless of family or action.
Vector sample_observation(const Environment& env, const Vector& context, const Vector& action,
                          RngStream& rng);

/// Mean of the demand-independent part: w^T X (linear) or (w^T X)^2 (square)
/// for newsvendor; the intercept term for pricing.
double demand_intercept(const Environment& env, const Vector& context);
/// Pricing price sensitivity w2^T X.
double price_slope(const Environment& env, const Vector& context);

/// Unprojected maximizer of expected_reward. Throws std::domain_error for
/// pricing contexts with w2^T X <= 0.
Vector unconstrained_optimal_action(const Environment& env, const Vector& context);
/// a*(X) projected onto A. Ties between arms break to the lowest index.
Vector optimal_action(const Environment& env, const Vector& context);
/// r(X, a): mean reward (bandits), expected revenue (pricing), or negative
/// expected overage/underage cost (newsvendor).
double expected_reward(const Environment& env, const Vector& context, const Vector& action);

/// Newsvendor expected cost E[h (a-D)^+ + l (D-a)^+] for D = m + Unif(0, eps).
double newsvendor_expected_cost(double order, double mean_base, double noise_bound, double h,
                                double l);

}  // namespace dplab
