#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dplab/core.hpp"
#include "dplab/environments.hpp"
#include "dplab/serialization.hpp"

namespace dplab::data {

/// Perturbation law of the noisy-optimal decision function f.
struct NoisySchedule {
  double noise_width = 1.0;                     // continuous noise ~ Unif[-w, w]^d
  std::array<int, 4> discrete_offsets{-2, -1, 1, 2};  // arm offsets, wrapped modulo k
  bool enabled = true;                          // false gives f = a* exactly

  /// Probability that step t is perturbed: min{1, 2 / sqrt(t)}.
  static double mixing_probability(std::size_t t);
};

/// f(H_t) = a*_t, perturbed with probability min{1, 2/sqrt(t)} and projected
/// onto A. The perturbation event depends only on t and fresh randomness.
class NoisyOptimalPolicy final : public Policy {
 public:
  explicit NoisyOptimalPolicy(Environment env, NoisySchedule schedule = {})
      : env_(std::move(env)), schedule_(schedule) {}
  Vector act(const History& history, RngStream& rng) override;
  bool randomized() const override { return schedule_.enabled; }

  /// Perturbs a*_t given the step index; exposed for testing the schedule.
  Vector perturb(const Vector& optimal, std::size_t t, RngStream& rng) const;

 private:
  Environment env_;
  NoisySchedule schedule_;
};

/// Builds the behavior policy for a freshly sampled environment.
using PolicyFactory = std::function<std::unique_ptr<Policy>(const Environment&)>;

PolicyFactory noisy_optimal_factory(NoisySchedule schedule = {});

inline constexpr const char* kGeneratorF = "f";
inline constexpr const char* kGeneratorPolicy = "policy";

/// Samples gamma from the prior (child stream "env"), rolls out the behavior
/// policy for `horizon` steps (child stream "rollout") and keeps the a*_t
/// label of every step.
TrajectoryRecord generate_sequence(const PriorSpec& prior, const PolicyFactory& behavior, int horizon,
                                   const RngStream& rng, std::string generator = kGeneratorF);

/// n sequences; sequence i uses the stream rng.derive("sequence", i).
std::vector<TrajectoryRecord> generate_dataset(const PriorSpec& prior, const PolicyFactory& behavior,
                                               std::size_t n, int horizon, const RngStream& rng,
                                               const std::string& generator, int jobs = 1);

/// The first `horizon` steps of a sequence.
TrajectoryRecord truncate(const TrajectoryRecord& seq, int horizon);

struct CurriculumSchedule {
  int start_horizon = 20;
  int target_horizon = 100;
  int total_iterations = 130;
  int early_iterations = 100;

  /// Last iteration of the ramp: ceil(0.77 * M).
  int ramp_end() const;
};

/// Linear ramp from start to target over m = 1..ceil(0.77 M), constant at
/// the target afterwards; rounded to a multiple of 5 and clamped to
/// [min(start, target), target].
int curriculum_horizon(int m, const CurriculumSchedule& schedule);

class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Writes one JSON object per line. When `header` is not null it is written
/// first as {"header": ...}. Returns the number of sequences written.
std::size_t write_dataset(const std::vector<TrajectoryRecord>& sequences,
                          const std::filesystem::path& path, const Json& header = nullptr);
/// Reads a dataset written by write_dataset. Header and blank lines are
/// skipped; an empty file is an empty dataset. Errors carry the line number.
std::vector<TrajectoryRecord> read_dataset(const std::filesystem::path& path);

}  // namespace dplab::data
