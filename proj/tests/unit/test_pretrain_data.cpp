#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dplab/pretrain_data.hpp"

using namespace dplab;
using namespace dplab::data;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dplab_test_" + name);
}

Environment five_arms(int best) {
  Environment env;
  env.family = Family::Mab;
  env.arm_means = Vector::Zero(5);
  env.arm_means(best) = 1.0;
  env.actions = ActionSpace::discrete(5);
  return env;
}

void check_same(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  CHECK(a.seed == b.seed);
  CHECK(a.generator == b.generator);
  CHECK(a.env.family == b.env.family);
  CHECK(a.env.arm_means == b.env.arm_means);
  CHECK(a.trajectory.projections == b.trajectory.projections);
  REQUIRE(a.trajectory.steps.size() == b.trajectory.steps.size());
  for (std::size_t i = 0; i < a.trajectory.steps.size(); ++i) {
    const auto& s = a.trajectory.steps[i];
    const auto& r = b.trajectory.steps[i];
    CHECK(s.context == r.context);
    CHECK(s.action == r.action);
    CHECK(s.observation == r.observation);
    CHECK(*s.optimal_action == *r.optimal_action);
  }
}

}  // namespace

TEST_CASE("mixing probability schedule") {
  CHECK(NoisySchedule::mixing_probability(1) == 1.0);
  CHECK(NoisySchedule::mixing_probability(4) == 1.0);
  CHECK(NoisySchedule::mixing_probability(16) == 0.5);
  CHECK(NoisySchedule::mixing_probability(10000) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK_THROWS(NoisySchedule::mixing_probability(0));

  NoisyOptimalPolicy f(five_arms(0));
  RngStream rng(1);
  const int n = 100000;
  int perturbed = 0;
  for (int i = 0; i < n; ++i) perturbed += arm_of(f.perturb(arm_vector(0), 10000, rng)) != 0;
  CHECK(std::abs(perturbed / static_cast<double>(n) - 0.02) < 3 * std::sqrt(0.02 * 0.98 / n));
  for (int i = 0; i < 100; ++i) CHECK(arm_of(f.perturb(arm_vector(0), 1, rng)) != 0);
}

TEST_CASE("perturbation event is independent of the environment") {
  // 2x2 contingency table: optimal arm (0 or 3) versus perturbed or not at t = 16.
  RngStream rng(2);
  double table[2][2] = {{0, 0}, {0, 0}};
  const int n = 20000;
  for (int g = 0; g < 2; ++g) {
    const int best = g == 0 ? 0 : 3;
    NoisyOptimalPolicy f(five_arms(best));
    for (int i = 0; i < n; ++i) table[g][arm_of(f.perturb(arm_vector(best), 16, rng)) != best] += 1;
  }
  double chi2 = 0.0;
  const double total = 2.0 * n;
  for (int g = 0; g < 2; ++g)
    for (int p = 0; p < 2; ++p) {
      const double expect = n * (table[0][p] + table[1][p]) / total;
      chi2 += (table[g][p] - expect) * (table[g][p] - expect) / expect;
    }
  CHECK(chi2 < 10.83);  // 1 degree of freedom, p = 0.001
}

TEST_CASE("continuous perturbations stay in A") {
  PriorSpec prior;
  prior.family = Family::Pricing;
  RngStream rng(3);
  const auto env = sample_environment(prior, rng);
  NoisyOptimalPolicy f(env, NoisySchedule{2.0, {-2, -1, 1, 2}, true});
  for (int i = 0; i < 1000; ++i) {
    const Vector a = f.perturb(Vector::Constant(1, 29.5), 1, rng);
    CHECK(env.actions.contains(a));
    CHECK(std::abs(a(0) - 29.5) <= 2.0);
  }
}

TEST_CASE("generated sequences carry optimal-action labels") {
  PriorSpec prior;
  prior.family = Family::Mab;
  const auto one = generate_sequence(prior, noisy_optimal_factory(), 1, RngStream(4));
  CHECK(one.trajectory.steps.size() == 1);
  CHECK(one.trajectory.steps[0].optimal_action.has_value());
  CHECK(one.generator == kGeneratorF);

  PriorSpec base;
  base.family = Family::LinearBandit;
  const auto pool = base.with_sampled_pool(1, RngStream(5));
  const auto seq = generate_sequence(pool, noisy_optimal_factory(NoisySchedule{1.0, {-2, -1, 1, 2}, false}), 30,
                                     RngStream(6));
  for (const auto& s : seq.trajectory.steps) CHECK(s.action == *s.optimal_action);
}

TEST_CASE("dataset generation is deterministic and independent of jobs") {
  PriorSpec prior;
  prior.family = Family::Mab;
  prior.dim = 5;
  const auto a = generate_dataset(prior, noisy_optimal_factory(), 8, 12, RngStream(7), kGeneratorF, 1);
  const auto b = generate_dataset(prior, noisy_optimal_factory(), 8, 12, RngStream(7), kGeneratorF, 3);
  for (std::size_t i = 0; i < a.size(); ++i) check_same(a[i], b[i]);
  const auto t = truncate(a[0], 5);
  CHECK(t.trajectory.steps.size() == 5);
  CHECK(truncate(a[0], 50).trajectory.steps.size() == 12);
}

TEST_CASE("curriculum ramp") {
  const CurriculumSchedule s;
  CHECK(s.ramp_end() == 101);
  CHECK(curriculum_horizon(1, s) == 20);
  CHECK(curriculum_horizon(101, s) == 100);
  CHECK(curriculum_horizon(130, s) == 100);
  CHECK(std::abs(curriculum_horizon(51, s) - 60) <= 5);
  int prev = 0;
  for (int m = 1; m <= 130; ++m) {
    const int h = curriculum_horizon(m, s);
    CHECK(h >= prev);
    CHECK(h >= 20);
    CHECK(h <= 100);
    prev = h;
  }
  CHECK_THROWS_AS(curriculum_horizon(0, s), std::out_of_range);
  CHECK_THROWS_AS(curriculum_horizon(131, s), std::out_of_range);
}

TEST_CASE("dataset round trip") {
  PriorSpec prior;
  prior.family = Family::Newsvendor;
  const auto seqs = generate_dataset(prior, noisy_optimal_factory(), 100, 7, RngStream(8), kGeneratorF);
  const auto path = temp_path("roundtrip.jsonl");
  CHECK(write_dataset(seqs, path, Json{{"seed", 8}}) == 100);
  const auto back = read_dataset(path);
  REQUIRE(back.size() == 100);
  for (std::size_t i = 0; i < back.size(); ++i) {
    check_same(seqs[i], back[i]);
    CHECK(seqs[i].env.w == back[i].env.w);
    CHECK(seqs[i].env.noise_bound == back[i].env.noise_bound);
    CHECK(seqs[i].env.holding_cost == back[i].env.holding_cost);
  }
  std::filesystem::remove(path);
}

TEST_CASE("empty and corrupt dataset files") {
  const auto empty = temp_path("empty.jsonl");
  { std::ofstream(empty).flush(); }
  CHECK(read_dataset(empty).empty());
  std::filesystem::remove(empty);

  PriorSpec prior;
  const auto seqs = generate_dataset(prior, noisy_optimal_factory(), 3, 4, RngStream(9), kGeneratorF);
  const auto path = temp_path("corrupt.jsonl");
  write_dataset(seqs, path);
  {
    std::ifstream in(path);
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    in.close();
    std::ofstream out(path);
    out << l1 << '\n' << l2.substr(0, l2.size() / 2) << '\n';
  }
  try {
    read_dataset(path);
    FAIL("expected a dataset error");
  } catch (const DatasetError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::filesystem::remove(path);
}
