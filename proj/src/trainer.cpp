#include "dplab/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "dplab/evalsuite.hpp"
#include "dplab/parallel.hpp"

namespace dplab::train {

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return ss / static_cast<double>(v.size() - 1);
}

data::PolicyFactory snapshot_factory(std::shared_ptr<const model::PolicyModel> model,
                                     std::shared_ptr<const Vector> params) {
  return [model, params](const Environment&) -> std::unique_ptr<Policy> {
    return std::make_unique<model::TransformerPolicy>(model, params);
  };
}

struct Example {
  model::Prompt prompt;
  std::vector<Vector> labels;
  bool from_policy = false;
};

Example make_example(const TrajectoryRecord& seq, const model::ModelConfig& cfg, bool from_policy) {
  const auto& steps = seq.trajectory.steps;
  return {model::build_prompt(steps, steps.size(), cfg), model::prompt_labels(steps, steps.size()), from_policy};
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (iterations < 1) fail("M must be >= 1");
  if (early_iterations < 1 || early_iterations > iterations) fail("M0 must satisfy 1 <= M0 <= M");
  if (!(kappa >= 0.0 && kappa <= 1.0)) fail("kappa must lie in [0,1]");
  if (horizon < 1) fail("horizon must be >= 1");
  if (start_horizon < 1) fail("start_horizon must be >= 1");
  if (early_n < 1 || mixed_n < 1) fail("sequence counts must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1 || mixed_epochs < 1) fail("epochs must be >= 1");
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) fail("lr and weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0,1)");
  if (!(eps > 0.0)) fail("eps must be > 0");
  if (eval_every < 1) fail("eval_every must be >= 1");
  if (eval_runs < 1 || ood_eval_n < 1) fail("evaluation sizes must be >= 1");
  if (pool_size < 1) fail("pool_size must be >= 1");
}

LossKind TrainConfig::resolved_loss(Family family) const { return loss ? *loss : model::default_loss(family); }

data::CurriculumSchedule TrainConfig::curriculum() const {
  return {start_horizon, horizon, iterations, early_iterations};
}

std::pair<int, int> TrainConfig::split(int m) const {
  if (m <= early_iterations) return {early_n, 0};
  const int nf = static_cast<int>(std::floor(kappa * static_cast<double>(mixed_n)));
  return {nf, mixed_n - nf};
}

Json to_json(const TrainConfig& c) {
  Json j{{"M", c.iterations},         {"M0", c.early_iterations}, {"horizon", c.horizon},
         {"start_horizon", c.start_horizon}, {"early_n", c.early_n}, {"mixed_n", c.mixed_n},
         {"kappa", c.kappa},          {"batch_size", c.batch_size}, {"epochs", c.epochs}, {"mixed_epochs", c.mixed_epochs},
         {"lr", c.lr},                {"weight_decay", c.weight_decay}, {"betas", {c.beta1, c.beta2}},
         {"eps", c.eps},              {"seed", c.seed},           {"eval_every", c.eval_every},
         {"eval_runs", c.eval_runs},  {"ood_eval_n", c.ood_eval_n}, {"pool_size", c.pool_size}};
  j["loss"] = c.loss ? Json(model::loss_name(*c.loss)) : Json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  require_known_keys(j,
                     {"M", "M0", "horizon", "start_horizon", "early_n", "mixed_n", "kappa", "batch_size", "epochs", "mixed_epochs",
                      "lr", "weight_decay", "betas", "eps", "seed", "eval_every", "eval_runs", "ood_eval_n",
                      "pool_size", "loss", "jobs"},
                     "train");
  TrainConfig c;
  c.iterations = j.value("M", c.iterations);
  c.early_iterations = j.value("M0", c.early_iterations);
  c.horizon = j.value("horizon", c.horizon);
  c.start_horizon = j.value("start_horizon", c.start_horizon);
  c.early_n = j.value("early_n", c.early_n);
  c.mixed_n = j.value("mixed_n", c.mixed_n);
  c.kappa = j.value("kappa", c.kappa);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.mixed_epochs = j.value("mixed_epochs", c.mixed_epochs);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("betas")) {
    const auto& b = j.at("betas");
    if (!b.is_array() || b.size() != 2) throw SchemaError("train: betas must be a 2-element array");
    c.beta1 = b[0].get<double>();
    c.beta2 = b[1].get<double>();
  }
  c.eps = j.value("eps", c.eps);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_runs = j.value("eval_runs", c.eval_runs);
  c.ood_eval_n = j.value("ood_eval_n", c.ood_eval_n);
  c.pool_size = j.value("pool_size", c.pool_size);
  c.jobs = j.value("jobs", c.jobs);
  if (j.contains("loss") && !j.at("loss").is_null()) c.loss = model::parse_loss(j.at("loss").get<std::string>());
  c.validate();
  return c;
}

OptimizerState OptimizerState::zeros(std::size_t n) {
  const auto k = static_cast<Eigen::Index>(n);
  return {Vector::Zero(k), Vector::Zero(k), 0};
}

void optimizer_step(Vector& params, const Vector& grads, OptimizerState& state, const TrainConfig& c,
                    const model::ParamLayout* layout) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("optimizer: parameter, gradient and moment sizes differ");
  for (Eigen::Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads(i))) {
      const auto idx = static_cast<std::size_t>(i);
      throw NonFiniteGradient(layout ? layout->slice_of(idx).name : std::string("params"), idx);
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grads(i);
    state.m(i) = c.beta1 * state.m(i) + (1.0 - c.beta1) * g;
    state.v(i) = c.beta2 * state.v(i) + (1.0 - c.beta2) * g * g;
    const double mhat = state.m(i) / bc1;
    const double vhat = state.v(i) / bc2;
    const double p = params(i);
    params(i) = p - c.lr * (mhat / (std::sqrt(vhat) + c.eps)) - c.lr * c.weight_decay * p;
  }
}

std::vector<double> sequence_losses(const model::PolicyModel& model, const Vector& params,
                                    const std::vector<TrajectoryRecord>& sequences, LossKind kind, int jobs) {
  std::vector<double> out(sequences.size());
  parallel_for(sequences.size(), jobs, [&](std::size_t i) {
    const Example ex = make_example(sequences[i], model.config(), false);
    out[i] = model::loss(model.forward(params, ex.prompt), ex.labels, kind).mean;
  });
  return out;
}

OodGap ood_gap(const model::PolicyModel& model, const Vector& params, const PriorSpec& prior, int n_eval,
               int horizon, LossKind kind, const RngStream& rng, const data::PolicyFactory& behavior, int jobs) {
  if (n_eval < 1) throw std::invalid_argument("n_eval must be >= 1");
  const auto n = static_cast<std::size_t>(n_eval);
  const auto own = data::generate_dataset(prior, behavior, n, horizon, rng.derive("policy-side"),
                                          data::kGeneratorPolicy, jobs);
  const auto ref = data::generate_dataset(prior, data::noisy_optimal_factory(), n, horizon, rng.derive("f-side"),
                                          data::kGeneratorF, jobs);
  const auto lp = sequence_losses(model, params, own, kind, jobs);
  const auto lf = sequence_losses(model, params, ref, kind, jobs);
  OodGap g;
  g.policy_loss = mean_of(lp);
  g.f_loss = mean_of(lf);
  g.gap = g.policy_loss - g.f_loss;
  g.se = std::sqrt(variance_of(lp) / static_cast<double>(n) + variance_of(lf) / static_cast<double>(n));
  return g;
}

OodGap ood_gap(const model::PolicyModel& model, const Vector& params, const PriorSpec& prior, int n_eval,
               int horizon, LossKind kind, const RngStream& rng, int jobs) {
  auto shared_model = std::make_shared<const model::PolicyModel>(model);
  auto shared_params = std::make_shared<const Vector>(params);
  return ood_gap(model, params, prior, n_eval, horizon, kind, rng, snapshot_factory(shared_model, shared_params),
                 jobs);
}

std::pair<double, double> mean_final_regret(const model::PolicyModel& model, const Vector& params,
                                            const PriorSpec& prior, int runs, int horizon, const RngStream& rng,
                                            int jobs) {
  auto shared_model = std::make_shared<const model::PolicyModel>(model);
  auto shared_params = std::make_shared<const Vector>(params);
  eval::PolicyFactory factory = [&](const Environment&, int) -> std::unique_ptr<Policy> {
    return std::make_unique<model::TransformerPolicy>(shared_model, shared_params);
  };
  eval::EvalOptions opts;
  opts.jobs = jobs;
  const auto rep = eval::evaluate("tf", factory, prior, runs, horizon, rng, opts);
  return {rep.final_mean, rep.final_se};
}

TrainResult train(const PriorSpec& prior, const model::ModelConfig& model_config, const TrainConfig& config,
                  const ProgressFn& progress) {
  prior.validate();
  config.validate();
  model_config.validate();
  if (model_config.max_prompt_len < 2 * config.horizon - 1)
    throw std::invalid_argument("max_prompt_len must be >= 2 * horizon - 1");
  const LossKind kind = config.resolved_loss(prior.family);
  if ((kind == LossKind::CrossEntropy) != (model_config.head == model::HeadKind::SoftmaxOverArms))
    throw std::invalid_argument("cross-entropy loss requires the softmax head and vice versa");
  const int jobs = resolve_jobs(config.jobs);

  const RngStream root(config.seed);
  auto model = std::make_shared<const model::PolicyModel>(model_config);
  const auto& layout = model->layout();
  Vector params = model::init_params(model_config, config.seed);
  OptimizerState opt = OptimizerState::zeros(layout.size());
  const auto schedule = config.curriculum();

  const auto f_pool = data::generate_dataset(prior, data::noisy_optimal_factory(), config.pool_size,
                                             config.horizon, root.derive("f-pool"), data::kGeneratorF, jobs);
  const RngStream eval_rng = root.derive("eval");
  const RngStream ood_rng = root.derive("ood");

  TrainResult result;
  for (int m = 1; m <= config.iterations; ++m) {
    const RngStream it = root.derive("iteration", static_cast<std::uint64_t>(m));
    IterationRecord rec;
    rec.m = m;
    rec.horizon = data::curriculum_horizon(m, schedule);
    rec.mixed = m > config.early_iterations;
    const auto [nf, np] = config.split(m);
    rec.f_sequences = nf;
    rec.policy_sequences = np;
    rec.start_digest = model::param_digest(params);

    // Frozen snapshot theta_m: policy sequences never see in-iteration updates.
    const auto snapshot = std::make_shared<const Vector>(params);
    rec.snapshot_digest = model::param_digest(*snapshot);

    std::vector<Example> examples;
    examples.reserve(static_cast<std::size_t>(nf + np));
    RngStream draw = it.derive("f-draw");
    for (int i = 0; i < nf; ++i) {
      const auto& seq = f_pool[draw.uniform_index(f_pool.size())];
      examples.push_back(make_example(data::truncate(seq, rec.horizon), model_config, false));
    }
    if (np > 0) {
      const auto seqs = data::generate_dataset(prior, snapshot_factory(model, snapshot), static_cast<std::size_t>(np),
                                               rec.horizon, it.derive("policy"), data::kGeneratorPolicy, jobs);
      for (const auto& s : seqs) examples.push_back(make_example(s, model_config, true));
    }

    const std::size_t n = examples.size();
    std::vector<double> first_loss(n, 0.0);
    const auto bs = static_cast<std::size_t>(config.batch_size);
    std::vector<Vector> grads(std::min(bs, n));
    std::vector<double> batch_losses(grads.size());
    const int epochs = rec.mixed ? config.mixed_epochs : config.epochs;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      RngStream shuffle = it.derive("shuffle", static_cast<std::uint64_t>(epoch));
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.uniform_index(i)]);
      for (std::size_t start = 0; start < n; start += bs) {
        const std::size_t b = std::min(bs, n - start);
        parallel_for(b, jobs, [&](std::size_t j) {
          const std::size_t idx = order[start + j];
          grads[j].setZero(static_cast<Eigen::Index>(layout.size()));
          RngStream drop = it.derive("dropout", static_cast<std::uint64_t>(epoch) * n + idx);
          batch_losses[j] = model->loss_and_gradient(params, examples[idx].prompt, examples[idx].labels, kind,
                                                     grads[j], model_config.dropout > 0.0 ? &drop : nullptr);
        });
        Vector total = grads[0];
        double loss_sum = batch_losses[0];
        for (std::size_t j = 1; j < b; ++j) {
          total += grads[j];
          loss_sum += batch_losses[j];
        }
        if (!std::isfinite(loss_sum)) throw TrainingDiverged(m, "non-finite training loss");
        if (epoch == 0)
          for (std::size_t j = 0; j < b; ++j) first_loss[order[start + j]] = batch_losses[j];
        total /= static_cast<double>(b);
        try {
          optimizer_step(params, total, opt, config, &layout);
        } catch (const NonFiniteGradient& e) {
          throw TrainingDiverged(m, e.what());
        }
        ++rec.optimizer_steps;
      }
    }

    std::vector<double> fl, pl;
    for (std::size_t i = 0; i < n; ++i) (examples[i].from_policy ? pl : fl).push_back(first_loss[i]);
    rec.train_loss = mean_of(first_loss);
    if (!fl.empty()) rec.f_loss = mean_of(fl);
    if (!pl.empty()) rec.rollout_loss = mean_of(pl);

    if (m % config.eval_every == 0 || m == config.early_iterations || m == config.iterations) {
      rec.ood = ood_gap(*model, params, prior, config.ood_eval_n, config.horizon, kind, ood_rng, jobs);
      const auto [mu, se] = mean_final_regret(*model, params, prior, config.eval_runs, config.horizon, eval_rng, jobs);
      rec.eval_regret_mean = mu;
      rec.eval_regret_se = se;
    }
    if (progress) progress(rec);
    result.telemetry.push_back(std::move(rec));
  }
  result.params = std::move(params);
  return result;
}

void write_telemetry_csv(std::ostream& out, const std::vector<IterationRecord>& telemetry, const Json& header) {
  if (!header.is_null()) out << "# " << header.dump() << '\n';
  out << "m,T_tilde,train_loss,f_loss,rollout_loss,ood_gap,eval_regret_mean,eval_regret_se\n";
  for (const auto& r : telemetry) {
    out << r.m << ',' << r.horizon << ',' << cell(r.train_loss) << ',' << cell(r.f_loss) << ','
        << cell(r.rollout_loss) << ',' << cell(r.ood ? std::optional<double>(r.ood->gap) : std::nullopt) << ','
        << cell(r.eval_regret_mean) << ',' << cell(r.eval_regret_se) << '\n';
  }
}

}  // namespace dplab::train
