#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dplab/baselines.hpp"
#include "dplab/bayes.hpp"
#include "dplab/evalsuite.hpp"
#include "dplab/policy_model.hpp"
#include "dplab/trainer.hpp"

namespace dplab {

/// Evaluation settings of an experiment.
struct EvalSettings {
  int runs = 100;
  int horizon = 100;
  std::vector<std::string> algos{"ucb", "ts"};
  bool common_random_numbers = true;
  std::optional<bayes::Rule> rule;  // Alg* decision rule; defaults to the family's
  bayes::Temperature temperature = bayes::Temperature::Exact;
  baselines::BonusMode ucb_bonus = baselines::BonusMode::Standard;
  std::string checkpoint;  // parameters for the "tf" algorithm
};

Json to_json(const EvalSettings& s);
EvalSettings eval_settings_from_json(const Json& j);

/// {"prior", "model", "train", "eval", "seed"}; every field is optional and
/// unknown keys are rejected. A top-level seed overrides train.seed.
struct ExperimentConfig {
  PriorSpec prior;
  std::optional<model::ModelConfig> model;  // defaults to ModelConfig::for_prior(prior, train.horizon)
  train::TrainConfig train;
  EvalSettings eval;
  std::uint64_t seed = 0;

  model::ModelConfig resolved_model() const;
};

Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const Json& j);
ExperimentConfig load_experiment(const std::string& path);

/// Raised for algorithm names or combinations that cannot be built.
class AlgorithmError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Baselines plus "oracle", "random", "alg-star" and "tf".
std::vector<std::string> algorithm_names();

/// Factories for the named algorithms on `prior`. "alg-star" needs a finite
/// pool; "tf" loads settings.checkpoint and checks it fits the prior.
std::vector<eval::NamedFactory> make_algorithms(const std::vector<std::string>& names, const PriorSpec& prior,
                                                const EvalSettings& settings);

/// Posterior averaging on a two-environment instance where it never learns.
struct CounterexampleOutcome {
  bayes::CounterexampleKind kind;
  int horizon = 0;
  std::vector<double> regret;           // final cumulative regret under each pool member
  std::vector<double> expected;         // per_step_regret * horizon
  std::vector<std::vector<double>> curves;  // cumulative regret per member
  double max_posterior_deviation = 0.0;     // max_t |P(true env | H_t) - 1/2|
  double max_regret_error = 0.0;
};

CounterexampleOutcome run_counterexample(bayes::CounterexampleKind kind, int horizon, std::uint64_t seed);
/// Columns env,t,regret (cumulative, t 1-based). '#' lines carry the header.
void write_counterexample_csv(std::ostream& out, const CounterexampleOutcome& outcome, const Json& header = nullptr);

}  // namespace dplab
