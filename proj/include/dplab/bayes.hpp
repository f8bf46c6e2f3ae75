#pragma once

#include <string_view>
#include <vector>

#include "dplab/core.hpp"
#include "dplab/environments.hpp"

namespace dplab::bayes {

/// Exponent of the Gaussian likelihood. Exact uses -(o - mu)^2 / (2 sigma^2);
/// Literal uses -(o - mu)^2 / sigma^2 (twice the inverse temperature).
enum class Temperature { Exact, Literal };

enum class Rule { Sampling, Averaging, Median };
enum class LossKind { CrossEntropy, Squared, Absolute };

std::string_view rule_name(Rule r);
Rule parse_rule(std::string_view name);
/// Sampling for cross-entropy, averaging for squared, median for absolute.
Rule rule_for_loss(LossKind loss);
/// The rule whose decision the family's default training loss targets.
Rule default_rule(Family family);
/// Throws std::invalid_argument when the rule is not the Bayes rule of `loss`.
void check_rule_matches_loss(Rule rule, LossKind loss);

/// Posterior over a finite environment pool, stored in log space.
struct PosteriorState {
  std::vector<Environment> pool;
  Vector log_prior;
  Vector log_weights;
  Temperature temperature = Temperature::Exact;
  /// Set when every member became infeasible and the state fell back to the prior.
  bool reset_to_prior = false;

  static PosteriorState uniform(std::vector<Environment> pool, Temperature temperature = Temperature::Exact);
  /// Normalized posterior, computed after subtracting the max log weight.
  Vector weights() const;
};

/// log P(o | X, a; gamma), with the Gaussian constant omitted under Literal.
/// Newsvendor: -log(eps_bar) when 0 <= o - m(X) <= eps_bar, else -inf.
double log_likelihood(const Environment& env, const StepRecord& step, Temperature temperature);

PosteriorState posterior_update(const PosteriorState& state, const StepRecord& step);

/// Posterior weights from the full likelihood product over `steps`, evaluated
/// in one pass from the prior.
Vector batch_posterior(const std::vector<Environment>& pool, const Vector& log_prior,
                       std::span<const StepRecord> steps, Temperature temperature);

/// Bayes decision rule applied to the pool's optimal actions at `context`.
///   sampling:  a*_{g~} with g~ drawn from the posterior
///   averaging: sum_i P(g_i | H) a*_{g_i}, projected onto A
///   median:    per coordinate, the smallest a* whose cumulative posterior
///              mass (pool sorted by that coordinate) reaches 1/2
/// Averaging and median are rejected for discrete (arm) actions.
Vector alg_star_act(const PosteriorState& state, const Vector& context, Rule rule, RngStream& rng);
Vector alg_star_act(const PosteriorState& state, const Vector& context, Rule rule, LossKind loss,
                    RngStream& rng);

/// Weighted median of scalars: min{ v_i : cumulative weight of sorted v <= v_i >= 1/2 }.
double posterior_median(std::span<const double> values, std::span<const double> weights);

/// Alg* as a policy over a finite pool.
class AlgStarPolicy final : public Policy {
 public:
  AlgStarPolicy(std::vector<Environment> pool, Rule rule, Temperature temperature = Temperature::Exact);
  Vector act(const History& history, RngStream& rng) override;
  bool randomized() const override { return rule_ == Rule::Sampling; }
  const PosteriorState& posterior() const { return state_; }

 private:
  PosteriorState state_;
  Rule rule_;
  std::size_t seen_ = 0;
};

/// Two-environment instances on which posterior averaging never learns.
enum class CounterexampleKind { LinearBandit, Pricing };
CounterexampleKind parse_counterexample(std::string_view name);

struct Counterexample {
  PriorSpec prior;                      // uniform over a 2-environment pool
  std::vector<double> per_step_regret;  // expected per-step regret of averaging, per pool member
};

/// Linear bandit: w in {(1,0), (0,1)}, unit noise, per-step regret 1/2 under both.
/// Pricing (single constant context): demands 2 - a and (4 - a)/5 with unit noise,
/// optimal prices 1 and 2, per-step regret 1/4 and 1/20.
Counterexample counterexample_instance(CounterexampleKind kind);

/// Entry t is the posterior mass off the true environment after t steps
/// (entry 0 is the prior mass off it). Length = steps + 1.
std::vector<double> concentration_curve(const Trajectory& trajectory,
                                        const std::vector<Environment>& pool,
                                        std::size_t true_index,
                                        Temperature temperature = Temperature::Exact);

}  // namespace dplab::bayes
