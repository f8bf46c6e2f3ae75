#include "dplab/pretrain_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dplab/parallel.hpp"
#include "dplab/rollout.hpp"

namespace dplab::data {

double NoisySchedule::mixing_probability(std::size_t t) {
  if (t == 0) throw std::invalid_argument("step index t is 1-based");
  return std::min(1.0, 2.0 / std::sqrt(static_cast<double>(t)));
}

Vector NoisyOptimalPolicy::perturb(const Vector& optimal, std::size_t t, RngStream& rng) const {
  if (!schedule_.enabled) return optimal;
  if (rng.uniform() >= NoisySchedule::mixing_probability(t)) return optimal;
  const ActionSpace& space = env_.actions;
  if (space.kind == ActionSpace::Kind::Discrete) {
    const auto& offs = schedule_.discrete_offsets;
    const int off = offs[rng.uniform_index(offs.size())];
    const int k = space.arms;
    return arm_vector(((arm_of(optimal) + off) % k + k) % k);
  }
  Vector a = optimal;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    a(i) += rng.uniform(-schedule_.noise_width, schedule_.noise_width);
  return space.project(a);
}

Vector NoisyOptimalPolicy::act(const History& history, RngStream& rng) {
  return perturb(optimal_action(env_, history.pending_context()), history.t(), rng);
}

PolicyFactory noisy_optimal_factory(NoisySchedule schedule) {
  return [schedule](const Environment& env) -> std::unique_ptr<Policy> {
    return std::make_unique<NoisyOptimalPolicy>(env, schedule);
  };
}

TrajectoryRecord generate_sequence(const PriorSpec& prior, const PolicyFactory& behavior, int horizon,
                                   const RngStream& rng, std::string generator) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  TrajectoryRecord rec;
  RngStream env_rng = rng.derive("env");
  rec.env = sample_environment(prior, env_rng);
  rec.seed = rng.key();
  auto policy = behavior(rec.env);
  rec.trajectory = rollout(rec.env, *policy, horizon, rng.derive("rollout"));
  rec.generator = std::move(generator);
  return rec;
}

std::vector<TrajectoryRecord> generate_dataset(const PriorSpec& prior, const PolicyFactory& behavior,
                                               std::size_t n, int horizon, const RngStream& rng,
                                               const std::string& generator, int jobs) {
  std::vector<TrajectoryRecord> out(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    out[i] = generate_sequence(prior, behavior, horizon, rng.derive("sequence", i), generator);
  });
  return out;
}

TrajectoryRecord truncate(const TrajectoryRecord& seq, int horizon) {
  TrajectoryRecord out = seq;
  const auto keep = std::min<std::size_t>(out.trajectory.steps.size(), static_cast<std::size_t>(std::max(horizon, 0)));
  out.trajectory.steps.resize(keep);
  return out;
}

int CurriculumSchedule::ramp_end() const {
  return static_cast<int>(std::ceil(0.77 * static_cast<double>(total_iterations)));
}

int curriculum_horizon(int m, const CurriculumSchedule& s) {
  if (m < 1 || m > s.total_iterations)
    throw std::out_of_range("iteration " + std::to_string(m) + " outside 1.." +
                            std::to_string(s.total_iterations));
  const int lo = std::min(s.start_horizon, s.target_horizon);
  const int hi = s.target_horizon;
  const int end = s.ramp_end();
  if (m >= end) return hi;
  const double frac = static_cast<double>(m - 1) / static_cast<double>(end - 1);
  const double raw = lo + frac * (hi - lo);
  const int rounded = 5 * static_cast<int>(std::lround(raw / 5.0));
  return std::clamp(rounded, lo, hi);
}

std::size_t write_dataset(const std::vector<TrajectoryRecord>& sequences,
                          const std::filesystem::path& path, const Json& header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  if (!header.is_null()) out << Json{{"header", header}}.dump() << '\n';
  for (const auto& seq : sequences) out << to_json(seq).dump() << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
  return sequences.size();
}

std::vector<TrajectoryRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  std::vector<TrajectoryRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw DatasetError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (j.is_object() && j.contains("header")) continue;
    try {
      out.push_back(trajectory_from_json(j));
    } catch (const std::exception& e) {
      throw DatasetError(e.what(), lineno);
    }
  }
  return out;
}

}  // namespace dplab::data
