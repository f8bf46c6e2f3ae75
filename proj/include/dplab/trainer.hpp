#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dplab/environments.hpp"
#include "dplab/policy_model.hpp"
#include "dplab/pretrain_data.hpp"
#include "dplab/serialization.hpp"

namespace dplab::train {

using model::LossKind;

struct TrainConfig {
  int iterations = 130;        // M
  int early_iterations = 100;  // M0
  int horizon = 100;           // target T of the curriculum
  int start_horizon = 20;
  int early_n = 512;           // sequences per early iteration
  int mixed_n = 96;            // sequences per mixed iteration
  double kappa = 1.0 / 3.0;    // share of f-generated sequences in mixed iterations
  int batch_size = 32;
  int epochs = 1;              // passes over each early iteration's dataset
  int mixed_epochs = 1;        // passes over each mixed iteration's dataset
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::optional<LossKind> loss;  // defaults to the family's loss
  int eval_every = 5;
  int eval_runs = 32;      // held-out environments for the regret column
  int ood_eval_n = 64;     // sequences per side of the OOD gap estimate
  std::size_t pool_size = 10000;  // pre-generated f-sequences
  int jobs = 1;

  void validate() const;
  LossKind resolved_loss(Family family) const;
  data::CurriculumSchedule curriculum() const;
  /// Split of an iteration into (f-sequences, policy sequences).
  std::pair<int, int> split(int m) const;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

struct OptimizerState {
  Vector m;
  Vector v;
  std::int64_t step = 0;

  static OptimizerState zeros(std::size_t n);
};

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(std::string slice, std::size_t index)
      : std::runtime_error("non-finite gradient in parameter slice '" + slice + "' (index " +
                           std::to_string(index) + ")"),
        slice_(std::move(slice)) {}
  const std::string& slice() const { return slice_; }

 private:
  std::string slice_;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(int iteration, const std::string& why)
      : std::runtime_error("training diverged at iteration " + std::to_string(iteration) + ": " + why),
        iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// AdamW with decoupled weight decay applied to the pre-update parameters:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p
/// Throws NonFiniteGradient (naming the slice when `layout` is given) before
/// touching any state.
void optimizer_step(Vector& params, const Vector& grads, OptimizerState& state, const TrainConfig& config,
                    const model::ParamLayout* layout = nullptr);

/// Mean loss of the parameters over the labelled positions of each sequence.
std::vector<double> sequence_losses(const model::PolicyModel& model, const Vector& params,
                                    const std::vector<TrajectoryRecord>& sequences, LossKind kind,
                                    int jobs = 1);

struct OodGap {
  double gap = 0.0;      // mean loss on policy-generated minus on f-generated sequences
  double se = 0.0;       // standard error of the difference
  double policy_loss = 0.0;
  double f_loss = 0.0;
};

/// Fresh environments on each side: n_eval sequences rolled out by the
/// policy and n_eval by f, all at `horizon`, scored by the policy's loss.
OodGap ood_gap(const model::PolicyModel& model, const Vector& params, const PriorSpec& prior, int n_eval,
               int horizon, LossKind kind, const RngStream& rng, int jobs = 1);
/// Same, with an arbitrary behavior policy standing in for the learned one.
OodGap ood_gap(const model::PolicyModel& model, const Vector& params, const PriorSpec& prior, int n_eval,
               int horizon, LossKind kind, const RngStream& rng, const data::PolicyFactory& behavior,
               int jobs = 1);

struct IterationRecord {
  int m = 0;
  int horizon = 0;  // T~
  bool mixed = false;
  int f_sequences = 0;
  int policy_sequences = 0;
  double train_loss = 0.0;
  std::optional<double> f_loss;
  std::optional<double> rollout_loss;
  std::optional<OodGap> ood;
  std::optional<double> eval_regret_mean;
  std::optional<double> eval_regret_se;
  std::uint64_t start_digest = 0;     // parameters at the start of the iteration
  std::uint64_t snapshot_digest = 0;  // parameters that generated the policy sequences
  int optimizer_steps = 0;
};

struct TrainResult {
  Vector params;
  std::vector<IterationRecord> telemetry;
};

using ProgressFn = std::function<void(const IterationRecord&)>;

/// Pretraining loop. Iterations m <= M0 train on f-sequences only; later
/// iterations mix floor(kappa n) f-sequences with policy sequences rolled out
/// by a frozen copy of the parameters at the start of the iteration.
TrainResult train(const PriorSpec& prior, const model::ModelConfig& model_config, const TrainConfig& config,
                  const ProgressFn& progress = nullptr);

/// Mean and standard error of the final cumulative regret of the policy over
/// `runs` environments drawn from the prior on streams rng.derive("run", i).
std::pair<double, double> mean_final_regret(const model::PolicyModel& model, const Vector& params,
                                            const PriorSpec& prior, int runs, int horizon,
                                            const RngStream& rng, int jobs = 1);

/// Columns: m, T_tilde, train_loss, f_loss, rollout_loss, ood_gap,
/// eval_regret_mean, eval_regret_se. Missing values are empty cells. Lines
/// starting with '#' carry the resolved config.
void write_telemetry_csv(std::ostream& out, const std::vector<IterationRecord>& telemetry,
                         const Json& header = nullptr);

}  // namespace dplab::train
