#pragma once

#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "dplab/core.hpp"
#include "dplab/environments.hpp"

namespace dplab::baselines {

/// Per-arm pull counts and running means.
struct ArmStats {
  std::vector<int> counts;
  std::vector<double> means;

  explicit ArmStats(int arms) : counts(static_cast<std::size_t>(arms), 0), means(static_cast<std::size_t>(arms), 0.0) {}
  void record(int arm, double reward);
  int total() const;
  int arms() const { return static_cast<int>(counts.size()); }
};

/// Standard: unpulled arms are forced round-robin, then sqrt(2 log T / n_a).
/// PaperLiteral: sqrt(2 log T) / min{1, n_a}, i.e. +inf for unpulled arms and
/// a constant bonus afterwards.
enum class BonusMode { Standard, PaperLiteral };

int ucb_act(const ArmStats& stats, int horizon, BonusMode mode = BonusMode::Standard);

/// Draws r~_a with variance scale * sqrt(2 log T) / max{1, n_a} around the
/// running mean (0 for unpulled arms) and returns the argmax.
int ts_act(const ArmStats& stats, int horizon, RngStream& rng, double scale = 1.0);

/// Ridge regression state: gram = sum z z^T + regularizer * I, moment = sum o z.
struct RidgeState {
  Matrix gram;
  Vector moment;
  double regularizer = 0.0;

  RidgeState(int dim, double regularizer);
  void record(const Vector& z, double observation);
  Vector estimate() const;
  Matrix inverse_gram() const;
  int dim() const { return static_cast<int>(moment.size()); }
};

/// argmax over the unit ball of w^T a + bonus_scale * sqrt(2 log T) * |a|_{gram^-1}.
///
/// The objective is convex, so the maximum lies on the sphere. Each start is
/// refined by ascent steps a <- grad / |grad| (linearization maximizer over the
/// ball, which never decreases a convex objective). Starts: w/|w| when w != 0,
/// then 8 fixed sphere points. The best value wins; ties keep the earlier start.
Vector linucb_act(const RidgeState& state, int horizon, double bonus_scale = 1.0);

/// Samples w~ ~ N(w_hat, cov_scale * sqrt(2 log T) * gram^-1) and returns w~/|w~|.
Vector lints_act(const RidgeState& state, int horizon, RngStream& rng, double cov_scale = 1.0);

/// Pricing regression features z = (X, a X).
Vector pricing_features(const Vector& context, double price);
/// Plug-in price w1^T X / (2 w2^T X) from the ridge estimate (w1, -w2), clamped
/// to A; midpoint of A when the estimated slope is not positive.
double ilse_price(const RidgeState& state, const Vector& context, const ActionSpace& space);
/// Constrained iterated least squares perturbation rule (unclamped).
double cils_act(double ilse_price, double running_avg, int t);
/// Thompson sampling for pricing: (alpha, beta) drawn around (w1^T X, w2^T X)
/// with covariance cov_scale * P^T gram^-1 P, P = blockdiag(X, -X).
double pricing_ts_act(const RidgeState& state, const Vector& context, const ActionSpace& space,
                      RngStream& rng, double cov_scale = 1.0);
/// Price from a drawn (alpha, beta); falls back to `fallback` when beta <= 1e-6.
double pricing_ts_price(double alpha, double beta, double fallback, const ActionSpace& space);

/// Linear quantile regression minimizing the mean pinball loss by subgradient
/// descent (500 iterations, step c / sqrt(k), c = 1 / mean |X|^2), started at
/// the least-squares fit. Returns the best iterate seen.
Vector fit_quantile_regression(std::span<const Vector> contexts, std::span<const double> targets,
                               double quantile);
double pinball_objective(std::span<const Vector> contexts, std::span<const double> targets,
                         const Vector& beta, double quantile);
/// Order quantity from the quantile fit at q = l / (h + l); midpoint of A with
/// fewer than dim(X) observations.
double erm_newsvendor_act(std::span<const StepRecord> steps, const Vector& context, double h,
                          double l, const ActionSpace& space);

/// Online gradient step of the feature-based adaptive inventory rule.
Vector fai_update(const Vector& w, const Vector& prev_context, double prev_order,
                  double prev_demand, int t, double h, double l);

struct BaselineOptions {
  BonusMode bonus = BonusMode::Standard;
};

/// Names: ucb, ts, linucb, lints, ilse, cils, pricing-ts, erm, fai.
std::span<const std::string_view> baseline_names();
bool is_baseline(std::string_view name);
/// Families a baseline runs on.
bool baseline_supports(std::string_view name, Family family);

/// Builds a fresh baseline instance. Only the environment's publicly known
/// quantities are read: action space, context dimension, noise variance and
/// the newsvendor costs (h, l).
std::unique_ptr<Policy> make_baseline(std::string_view name, const Environment& env, int horizon,
                                      const BaselineOptions& options = {});

}  // namespace dplab::baselines
