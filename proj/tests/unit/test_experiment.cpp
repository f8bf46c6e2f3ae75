#include "doctest.h"

#include <sstream>

#include "dplab/experiment.hpp"

using namespace dplab;

TEST_CASE("experiment configs: seed precedence, model merge and strictness") {
  const Json j = Json::parse(R"({
    "prior": {"family": "mab", "mode": "pool", "dim": 3, "pool_size": 4, "pool_seed": 7},
    "model": {"layers": 1, "embed_dim": 8},
    "train": {"horizon": 6, "seed": 11},
    "seed": 3})");
  const auto c = experiment_from_json(j);
  CHECK(c.seed == 3);
  CHECK(c.train.seed == 3);
  REQUIRE(c.model);
  CHECK(c.model->layers == 1);
  CHECK(c.model->heads == 2);
  CHECK(c.model->actions.arms == 3);
  CHECK(c.model->max_prompt_len == 11);
  CHECK(c.prior.pool.size() == 4);

  // Round trip through the resolved form.
  const auto again = experiment_from_json(to_json(c));
  CHECK(to_json(again) == to_json(c));

  Json typo = j;
  typo["model"]["layer"] = 2;
  CHECK_THROWS_AS(experiment_from_json(typo), SchemaError);
  Json bad_eval = j;
  bad_eval["eval"] = Json{{"temperature", "warm"}};
  CHECK_THROWS_AS(experiment_from_json(bad_eval), SchemaError);
  CHECK_THROWS_AS(experiment_from_json(Json::array()), SchemaError);
  CHECK_THROWS_AS(load_experiment("does/not/exist.json"), std::ios_base::failure);
}

TEST_CASE("shipped configs parse and pin the desk-scale run") {
  const auto c = load_experiment(std::string(DPLAB_SOURCE_DIR) + "/configs/mab_pool5.json");
  CHECK(c.prior.pool.size() == 4);
  CHECK(c.prior.pool[0].arm_means.size() == 5);
  CHECK(c.train.iterations == 30);
  CHECK(c.train.early_iterations == 15);
  CHECK(c.train.horizon == 50);
  CHECK(c.train.early_n == 512);
  CHECK(c.train.lr == 5e-4);
  CHECK(c.train.mixed_epochs == 8);
  CHECK(c.seed == 1);
  const auto m = c.resolved_model();
  CHECK(m.layers == 2);
  CHECK(m.embed_dim == 32);
  CHECK_NOTHROW(load_experiment(std::string(DPLAB_SOURCE_DIR) + "/configs/tiny.json"));
}

TEST_CASE("algorithm construction validates names and requirements") {
  PriorSpec mab;
  mab.family = Family::Mab;
  mab.dim = 3;
  EvalSettings s;
  CHECK(make_algorithms({"ucb", "ts", "oracle", "random"}, mab, s).size() == 4);
  CHECK_THROWS_AS(make_algorithms({"alg-star"}, mab, s), AlgorithmError);
  CHECK_THROWS_AS(make_algorithms({"tf"}, mab, s), AlgorithmError);
  CHECK_THROWS_AS(make_algorithms({"linucb"}, mab, s), AlgorithmError);
  try {
    make_algorithms({"nope"}, mab, s);
    FAIL("expected AlgorithmError");
  } catch (const AlgorithmError& e) {
    CHECK(std::string(e.what()).find("alg-star") != std::string::npos);
  }
  const auto pool = mab.with_sampled_pool(4, RngStream(1).derive("pool"));
  CHECK(make_algorithms({"alg-star"}, pool, s).size() == 1);
  s.rule = bayes::Rule::Averaging;
  CHECK_THROWS(make_algorithms({"alg-star"}, pool, s));
}

TEST_CASE("counterexample outcome and CSV") {
  const auto r = run_counterexample(bayes::CounterexampleKind::Pricing, 20, 0);
  CHECK(r.regret[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(r.regret[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.max_regret_error <= 1e-9);
  std::ostringstream out;
  write_counterexample_csv(out, r, Json{{"seed", 0}});
  const auto text = out.str();
  CHECK(text.rfind("# {\"seed\":0}\nenv,t,regret\ngamma1,1,0.25\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2 + 40);
}
