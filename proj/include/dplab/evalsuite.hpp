#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "dplab/core.hpp"
#include "dplab/environments.hpp"
#include "dplab/serialization.hpp"

namespace dplab::eval {

/// Builds a fresh policy instance for one run.
using PolicyFactory = std::function<std::unique_ptr<Policy>(const Environment& env, int horizon)>;

struct NamedFactory {
  std::string name;
  PolicyFactory factory;
};

struct RegretReport {
  std::string algorithm;
  std::vector<std::vector<double>> runs;  // runs x T cumulative expected regret
  std::vector<double> mean;
  std::vector<double> p05;
  std::vector<double> p95;
  double final_mean = 0.0;
  double final_se = 0.0;
  int projections = 0;  // total out-of-range actions projected onto A

  std::vector<double> finals() const;
};

struct EvalOptions {
  /// Run r of every algorithm uses the stream base.derive("run", r), so all
  /// algorithms face the same environments, contexts and noise draws. When
  /// false, each algorithm gets its own stream base.derive(name).derive("run", r).
  bool common_random_numbers = true;
  int jobs = 1;
};

/// Type-7 (linear interpolation) empirical quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Run r samples gamma from the prior on the run stream's "env" child and
/// rolls out a fresh policy on its "rollout" child.
RegretReport evaluate(const std::string& name, const PolicyFactory& factory, const PriorSpec& prior, int runs,
                      int horizon, const RngStream& base, const EvalOptions& options = {});
RegretReport evaluate(const std::string& name, const PolicyFactory& factory, const PriorSpec& prior, int runs,
                      int horizon, std::uint64_t seed, const EvalOptions& options = {});

std::vector<RegretReport> compare(const std::vector<NamedFactory>& algos, const PriorSpec& prior, int runs,
                                  int horizon, std::uint64_t seed, const EvalOptions& options = {});

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap interval for the mean.
Interval bootstrap_mean_ci(const std::vector<double>& values, double level, int resamples, RngStream rng);

/// Long-format CSV: algo,run,t,regret (t is 1-based). '#' lines carry the header.
void write_regret_csv(std::ostream& out, const std::vector<RegretReport>& reports, const Json& header = nullptr);
/// {"header", "algorithms": [{"name", "final_mean", "final_se", "final_ci95", "mean", "p05", "p95"}]}.
/// Bootstrap intervals use a stream derived from `seed`.
Json summary_json(const std::vector<RegretReport>& reports, std::uint64_t seed, const Json& header = nullptr);
/// Plot series: algo,t,mean,p05,p95.
void write_plot_data(std::ostream& out, const std::vector<RegretReport>& reports);
/// Final-regret table, one row per algorithm.
void write_final_table(std::ostream& out, const std::vector<RegretReport>& reports);

struct SurrogateResult {
  double max_violation = -std::numeric_limits<double>::infinity();  // max of regret - C * loss
  double max_regret = 0.0;
  int samples = 0;
};

/// Single-step check of regret <= C * loss on random (environment, context,
/// prediction) triples:
///   mab:           predicted distribution p, loss -log p(a*), C = max gap
///   pricing:       linear demand, loss (a - a*)^2, C = 2 w2^T X
///   linear-bandit: loss |a - a*|_1, C = 1 (bound on |w|_inf)
///   newsvendor:    loss |a - a*|, C = max{h, l}
SurrogateResult surrogate_check(Family family, int samples, RngStream rng);

}  // namespace dplab::eval
