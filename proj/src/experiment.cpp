#include "dplab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dplab/rollout.hpp"

namespace dplab {

namespace {

bayes::Temperature parse_temperature(const std::string& s) {
  if (s == "exact") return bayes::Temperature::Exact;
  if (s == "literal") return bayes::Temperature::Literal;
  throw SchemaError("unknown posterior temperature '" + s + "' (expected exact|literal)");
}

baselines::BonusMode parse_bonus(const std::string& s) {
  if (s == "standard") return baselines::BonusMode::Standard;
  if (s == "paper-literal") return baselines::BonusMode::PaperLiteral;
  throw SchemaError("unknown UCB bonus '" + s + "' (expected standard|paper-literal)");
}

}  // namespace

Json to_json(const EvalSettings& s) {
  Json j{{"runs", s.runs},
         {"horizon", s.horizon},
         {"algos", s.algos},
         {"common_random_numbers", s.common_random_numbers},
         {"temperature", s.temperature == bayes::Temperature::Exact ? "exact" : "literal"},
         {"ucb_bonus", s.ucb_bonus == baselines::BonusMode::Standard ? "standard" : "paper-literal"},
         {"checkpoint", s.checkpoint}};
  j["rule"] = s.rule ? Json(bayes::rule_name(*s.rule)) : Json(nullptr);
  return j;
}

EvalSettings eval_settings_from_json(const Json& j) {
  require_known_keys(j, {"runs", "horizon", "algos", "common_random_numbers", "rule", "temperature", "ucb_bonus",
                         "checkpoint"},
                     "eval");
  EvalSettings s;
  s.runs = j.value("runs", s.runs);
  s.horizon = j.value("horizon", s.horizon);
  if (j.contains("algos")) s.algos = j.at("algos").get<std::vector<std::string>>();
  s.common_random_numbers = j.value("common_random_numbers", s.common_random_numbers);
  if (j.contains("rule") && !j.at("rule").is_null()) s.rule = bayes::parse_rule(j.at("rule").get<std::string>());
  if (j.contains("temperature")) s.temperature = parse_temperature(j.at("temperature").get<std::string>());
  if (j.contains("ucb_bonus")) s.ucb_bonus = parse_bonus(j.at("ucb_bonus").get<std::string>());
  s.checkpoint = j.value("checkpoint", s.checkpoint);
  if (s.runs < 1 || s.horizon < 1) throw SchemaError("eval: runs and horizon must be >= 1");
  return s;
}

model::ModelConfig ExperimentConfig::resolved_model() const {
  return model ? *model : model::ModelConfig::for_prior(prior, train.horizon);
}

Json to_json(const ExperimentConfig& c) {
  return Json{{"prior", to_json(c.prior)},
              {"model", model::to_json(c.resolved_model())},
              {"train", train::to_json(c.train)},
              {"eval", to_json(c.eval)},
              {"seed", c.seed}};
}

ExperimentConfig experiment_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("experiment config must be a JSON object");
  require_known_keys(j, {"prior", "model", "train", "eval", "seed"}, "experiment");
  ExperimentConfig c;
  if (j.contains("prior")) c.prior = prior_from_json(j.at("prior"));
  if (j.contains("train")) c.train = train::train_config_from_json(j.at("train"));
  if (j.contains("seed")) {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.train.seed = c.seed;
  } else {
    c.seed = c.train.seed;
  }
  if (j.contains("model")) {
    // Fields left out of the model block are derived from the prior and horizon.
    if (!j.at("model").is_object()) throw SchemaError("model must be a JSON object");
    Json merged = model::to_json(model::ModelConfig::for_prior(c.prior, c.train.horizon));
    merged.update(j.at("model"));
    c.model = model::model_config_from_json(merged);
    c.model->validate();
  }
  if (j.contains("eval")) c.eval = eval_settings_from_json(j.at("eval"));
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

std::vector<std::string> algorithm_names() {
  std::vector<std::string> out;
  for (auto n : baselines::baseline_names()) out.emplace_back(n);
  for (const char* n : {"oracle", "random", "alg-star", "tf"}) out.emplace_back(n);
  return out;
}

std::vector<eval::NamedFactory> make_algorithms(const std::vector<std::string>& names, const PriorSpec& prior,
                                                const EvalSettings& settings) {
  std::vector<eval::NamedFactory> out;
  for (const auto& name : names) {
    if (baselines::is_baseline(name)) {
      if (!baselines::baseline_supports(name, prior.family))
        throw AlgorithmError("algorithm '" + name + "' does not run on the " +
                             std::string(family_name(prior.family)) + " family");
      baselines::BaselineOptions opts;
      opts.bonus = settings.ucb_bonus;
      out.push_back({name, [name, opts](const Environment& env, int horizon) {
                       return baselines::make_baseline(name, env, horizon, opts);
                     }});
    } else if (name == "oracle") {
      out.push_back({name, [](const Environment& env, int) -> std::unique_ptr<Policy> {
                       return std::make_unique<OraclePolicy>(env);
                     }});
    } else if (name == "random") {
      out.push_back({name, [](const Environment& env, int) -> std::unique_ptr<Policy> {
                       return std::make_unique<UniformRandomPolicy>(env.actions);
                     }});
    } else if (name == "alg-star") {
      if (prior.mode != PriorSpec::Mode::FinitePool)
        throw AlgorithmError("alg-star needs a finite environment pool (prior mode \"pool\")");
      const bayes::Rule rule = settings.rule.value_or(bayes::default_rule(prior.family));
      if (rule != bayes::Rule::Sampling && prior.action_space().kind == ActionSpace::Kind::Discrete)
        throw AlgorithmError("only posterior sampling is defined for arm-valued actions");
      auto pool = prior.pool;
      const auto temp = settings.temperature;
      out.push_back({name, [pool, rule, temp](const Environment&, int) -> std::unique_ptr<Policy> {
                       return std::make_unique<bayes::AlgStarPolicy>(pool, rule, temp);
                     }});
    } else if (name == "tf") {
      if (settings.checkpoint.empty()) throw AlgorithmError("algorithm 'tf' needs a checkpoint");
      const auto ck = model::load_checkpoint(settings.checkpoint);
      const auto& mc = ck.config;
      const auto space = prior.action_space();
      if (mc.context_dim != prior.context_dim() || mc.actions.kind != space.kind || mc.actions.dim != space.dim ||
          mc.actions.arms != space.arms)
        throw AlgorithmError("checkpoint does not match the prior's context or action space");
      if (mc.max_prompt_len < 2 * settings.horizon - 1)
        throw AlgorithmError("checkpoint supports horizons up to " + std::to_string((mc.max_prompt_len + 1) / 2));
      auto shared_model = std::make_shared<const model::PolicyModel>(mc);
      auto shared_params = std::make_shared<const Vector>(ck.params);
      out.push_back({name, [shared_model, shared_params](const Environment&, int) -> std::unique_ptr<Policy> {
                       return std::make_unique<model::TransformerPolicy>(shared_model, shared_params);
                     }});
    } else {
      std::string valid;
      for (const auto& n : algorithm_names()) valid += (valid.empty() ? "" : ", ") + n;
      throw AlgorithmError("unknown algorithm '" + name + "'; valid names: " + valid);
    }
  }
  return out;
}

CounterexampleOutcome run_counterexample(bayes::CounterexampleKind kind, int horizon, std::uint64_t seed) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  const auto inst = bayes::counterexample_instance(kind);
  CounterexampleOutcome out;
  out.kind = kind;
  out.horizon = horizon;
  const RngStream root = RngStream(seed).derive("counterexample");
  for (std::size_t g = 0; g < inst.prior.pool.size(); ++g) {
    const auto& env = inst.prior.pool[g];
    bayes::AlgStarPolicy avg(inst.prior.pool, bayes::Rule::Averaging);
    const auto traj = rollout(env, avg, horizon, root.derive("gamma", g));
    auto curve = cumulative_expected_regret(traj, env);
    const double expected = inst.per_step_regret[g] * horizon;
    out.regret.push_back(curve.back());
    out.expected.push_back(expected);
    out.max_regret_error = std::max(out.max_regret_error, std::abs(curve.back() - expected));
    for (double off : bayes::concentration_curve(traj, inst.prior.pool, g))
      out.max_posterior_deviation = std::max(out.max_posterior_deviation, std::abs((1.0 - off) - 0.5));
    out.curves.push_back(std::move(curve));
  }
  return out;
}

void write_counterexample_csv(std::ostream& out, const CounterexampleOutcome& outcome, const Json& header) {
  if (!header.is_null()) out << "# " << header.dump() << '\n';
  out << "env,t,regret\n";
  const auto old = out.precision(17);
  for (std::size_t g = 0; g < outcome.curves.size(); ++g)
    for (std::size_t t = 0; t < outcome.curves[g].size(); ++t)
      out << "gamma" << g + 1 << ',' << t + 1 << ',' << outcome.curves[g][t] << '\n';
  out.precision(old);
}

}  // namespace dplab
