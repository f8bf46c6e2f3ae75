#include "doctest.h"

#include <cmath>
#include <sstream>

#include "dplab/trainer.hpp"

using namespace dplab;
using namespace dplab::train;

namespace {

PriorSpec small_pool() {
  PriorSpec base;
  base.family = Family::Mab;
  base.dim = 3;
  return base.with_sampled_pool(4, RngStream(1));
}

model::ModelConfig tiny_model(const PriorSpec& prior, int horizon) {
  auto c = model::ModelConfig::for_prior(prior, horizon);
  c.layers = 1;
  c.heads = 1;
  c.embed_dim = 8;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.iterations = 3;
  c.early_iterations = 2;
  c.horizon = 6;
  c.start_horizon = 5;
  c.early_n = 8;
  c.mixed_n = 6;
  c.batch_size = 4;
  c.lr = 1e-3;
  c.pool_size = 16;
  c.eval_every = 1;
  c.eval_runs = 4;
  c.ood_eval_n = 4;
  c.seed = 5;
  return c;
}

std::string telemetry_csv(const TrainResult& r) {
  std::ostringstream out;
  write_telemetry_csv(out, r.telemetry);
  return out.str();
}

}  // namespace

TEST_CASE("optimizer fixed points and weight decay") {
  TrainConfig c;
  c.lr = 0.1;
  c.weight_decay = 0.0;
  Vector p(3);
  p << 1.0, -2.0, 0.5;
  const Vector start = p;
  auto state = OptimizerState::zeros(3);
  optimizer_step(p, Vector::Zero(3), state, c);
  CHECK(p == start);

  c.weight_decay = 0.1;
  state = OptimizerState::zeros(3);
  optimizer_step(p, Vector::Zero(3), state, c);
  CHECK(p == start * (1.0 - 0.1 * 0.1));
}

TEST_CASE("first optimizer step matches a hand computation") {
  TrainConfig c;
  c.lr = 0.1;
  c.weight_decay = 0.0;
  Vector p(3);
  p << 1.0, -2.0, 0.5;
  Vector g(3);
  g << 0.1, -0.2, 0.0;
  auto state = OptimizerState::zeros(3);
  optimizer_step(p, g, state, c);
  // Bias-corrected moments after one step are g and g^2, so each coordinate
  // moves by lr * g / (|g| + eps).
  CHECK(p(0) == doctest::Approx(1.0 - 0.1 * 0.1 / (0.1 + 1e-8)).epsilon(1e-15));
  CHECK(p(1) == doctest::Approx(-2.0 + 0.1 * 0.2 / (0.2 + 1e-8)).epsilon(1e-15));
  CHECK(p(2) == 0.5);
  CHECK(state.step == 1);
  CHECK(state.m(0) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(state.v(1) == doctest::Approx(0.001 * 0.04).epsilon(1e-15));
}

TEST_CASE("non-finite gradients name their slice") {
  const auto prior = small_pool();
  const auto cfg = tiny_model(prior, 6);
  const model::ParamLayout layout(cfg);
  Vector p = Vector::Zero(static_cast<Eigen::Index>(layout.size()));
  Vector g = Vector::Zero(p.size());
  const auto& slice = layout.at("block0.mlp.fc1.w");
  g(static_cast<Eigen::Index>(slice.offset + 3)) = std::nan("");
  auto state = OptimizerState::zeros(layout.size());
  try {
    optimizer_step(p, g, state, TrainConfig{}, &layout);
    FAIL("expected NonFiniteGradient");
  } catch (const NonFiniteGradient& e) {
    CHECK(e.slice() == "block0.mlp.fc1.w");
  }
  CHECK(state.step == 0);
  CHECK(p.isZero(0.0));
}

TEST_CASE("iteration split") {
  TrainConfig c;
  c.iterations = 10;
  c.early_iterations = 4;
  c.early_n = 512;
  c.mixed_n = 300;
  CHECK(c.split(4) == std::pair{512, 0});
  CHECK(c.split(5) == std::pair{100, 200});
  c.mixed_n = 10;
  CHECK(c.split(5) == std::pair{3, 7});
}

TEST_CASE("config validation and strict JSON") {
  TrainConfig c;
  c.early_iterations = c.iterations + 1;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.kappa = 1.5;
  CHECK_THROWS(c.validate());

  const TrainConfig d = tiny_train();
  const auto back = train_config_from_json(to_json(d));
  CHECK(to_json(back) == to_json(d));
  Json bad = to_json(d);
  bad["learning_rate"] = 0.1;
  CHECK_THROWS(train_config_from_json(bad));
}

TEST_CASE("lr = 0 leaves the initial parameters bit-exact") {
  const auto prior = small_pool();
  const auto cfg = tiny_model(prior, 6);
  TrainConfig c = tiny_train();
  c.iterations = 1;
  c.early_iterations = 1;
  c.early_n = 4;
  c.batch_size = 4;
  c.lr = 0.0;
  const auto r = train::train(prior, cfg, c);
  CHECK(r.telemetry.size() == 1);
  CHECK(r.telemetry[0].optimizer_steps == 1);
  CHECK(r.params == model::init_params(cfg, c.seed));
}

TEST_CASE("M0 = M never generates policy sequences") {
  const auto prior = small_pool();
  TrainConfig c = tiny_train();
  c.early_iterations = c.iterations;
  const auto r = train::train(prior, tiny_model(prior, 6), c);
  for (const auto& rec : r.telemetry) {
    CHECK_FALSE(rec.mixed);
    CHECK(rec.policy_sequences == 0);
    CHECK_FALSE(rec.rollout_loss.has_value());
  }
}

TEST_CASE("training telemetry, frozen snapshots and determinism") {
  const auto prior = small_pool();
  const auto cfg = tiny_model(prior, 6);
  TrainConfig c = tiny_train();
  const auto a = train::train(prior, cfg, c);
  REQUIRE(a.telemetry.size() == 3);
  CHECK(a.telemetry[0].horizon == 5);
  CHECK(a.telemetry[2].horizon == 6);
  const auto& mixed = a.telemetry[2];
  CHECK(mixed.mixed);
  CHECK(mixed.f_sequences == 2);
  CHECK(mixed.policy_sequences == 4);
  CHECK(mixed.rollout_loss.has_value());
  CHECK(mixed.snapshot_digest == mixed.start_digest);
  for (std::size_t i = 1; i < a.telemetry.size(); ++i)
    CHECK(a.telemetry[i].start_digest != a.telemetry[i - 1].snapshot_digest);
  for (const auto& rec : a.telemetry) {
    CHECK(std::isfinite(rec.train_loss));
    CHECK(rec.ood.has_value());
    CHECK(rec.eval_regret_mean.has_value());
  }

  const auto b = train::train(prior, cfg, c);
  CHECK(telemetry_csv(a) == telemetry_csv(b));
  CHECK(a.params == b.params);

  c.jobs = 3;
  const auto threaded = train::train(prior, cfg, c);
  CHECK(telemetry_csv(a) == telemetry_csv(threaded));
  CHECK(a.params == threaded.params);
}

TEST_CASE("telemetry CSV layout") {
  IterationRecord r;
  r.m = 1;
  r.horizon = 20;
  r.train_loss = 0.5;
  std::ostringstream out;
  write_telemetry_csv(out, {r}, Json{{"seed", 3}});
  CHECK(out.str() ==
        "# {\"seed\":3}\nm,T_tilde,train_loss,f_loss,rollout_loss,ood_gap,eval_regret_mean,eval_regret_se\n"
        "1,20,0.5,,,,,\n");
}

TEST_CASE("OOD gap vanishes when the policy is f itself") {
  const auto prior = small_pool();
  const auto cfg = tiny_model(prior, 8);
  const model::PolicyModel model(cfg);
  const Vector params = model::init_params(cfg, 2);
  const auto gap = ood_gap(model, params, prior, 500, 8, LossKind::CrossEntropy, RngStream(3),
                           data::noisy_optimal_factory());
  CHECK(gap.se > 0.0);
  CHECK(std::abs(gap.gap) < 2.0 * gap.se);

  const auto again = ood_gap(model, params, prior, 20, 8, LossKind::CrossEntropy, RngStream(4));
  const auto same = ood_gap(model, params, prior, 20, 8, LossKind::CrossEntropy, RngStream(4));
  CHECK(again.gap == same.gap);
  CHECK(again.se == same.se);
}
