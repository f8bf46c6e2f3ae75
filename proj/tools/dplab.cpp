#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dplab/experiment.hpp"
#include "dplab/gradcheck.hpp"
#include "dplab/parallel.hpp"
#include "dplab/pretrain_data.hpp"

using namespace dplab;

namespace {

enum Exit : int { kOk = 0, kIo = 1, kUsage = 2, kDiverged = 3, kCheckFailed = 4 };

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Prior from --prior FILE, else --family with an optional sampled pool.
struct PriorArgs {
  std::string family = "mab";
  std::string prior_file;
  int pool = 0;
  std::uint64_t pool_seed = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--family", family, "mab | linear-bandit | pricing | newsvendor")->capture_default_str();
    cmd->add_option("--prior", prior_file, "prior JSON file (overrides --family)");
    cmd->add_option("--pool", pool, "sample a finite pool of this many environments")->check(CLI::NonNegativeNumber);
    cmd->add_option("--pool-seed", pool_seed, "seed of the sampled pool")->capture_default_str();
  }

  PriorSpec resolve() const {
    PriorSpec prior;
    if (!prior_file.empty()) {
      prior = prior_from_json(read_json_file(prior_file));
    } else {
      try {
        prior.family = parse_family(family);
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
    }
    if (pool > 0) {
      if (prior.mode == PriorSpec::Mode::FinitePool) throw UsageError("--pool needs an infinite prior");
      prior = prior.with_sampled_pool(static_cast<std::size_t>(pool), RngStream(pool_seed).derive("pool"));
    }
    prior.validate();
    return prior;
  }
};

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  PriorArgs prior;
  std::size_t n = 100;
  int horizon = 100;
  std::string policy = "f";
  std::string out;
  std::uint64_t seed = 0;
  int jobs = 0;
};

int cmd_gen_data(const GenDataArgs& a) {
  if (a.out.empty()) throw UsageError("--out is required");
  const PriorSpec prior = a.prior.resolve();
  const int jobs = resolve_jobs(a.jobs);
  data::PolicyFactory behavior;
  std::string generator = data::kGeneratorF;
  if (a.policy == "f") {
    behavior = data::noisy_optimal_factory();
  } else {
    const auto ck = model::load_checkpoint(a.policy);
    const auto space = prior.action_space();
    if (ck.config.context_dim != prior.context_dim() || ck.config.actions.kind != space.kind ||
        ck.config.actions.dim != space.dim || ck.config.actions.arms != space.arms)
      throw UsageError("checkpoint does not match the prior's context or action space");
    if (ck.config.max_prompt_len < 2 * a.horizon - 1) throw UsageError("checkpoint is too short for --horizon");
    auto m = std::make_shared<const model::PolicyModel>(ck.config);
    auto p = std::make_shared<const Vector>(ck.params);
    behavior = [m, p](const Environment&) -> std::unique_ptr<Policy> {
      return std::make_unique<model::TransformerPolicy>(m, p);
    };
    generator = data::kGeneratorPolicy;
  }
  const auto seqs =
      data::generate_dataset(prior, behavior, a.n, a.horizon, RngStream(a.seed).derive("gen-data"), generator, jobs);
  const Json header{{"command", "gen-data"}, {"prior", to_json(prior)}, {"n", a.n},          {"horizon", a.horizon},
                    {"policy", a.policy},    {"generator", generator},  {"seed", a.seed}};
  open_out(a.out).close();
  const auto written = data::write_dataset(seqs, a.out, header);
  std::cout << written << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string out = "checkpoint.bin";
  std::string telemetry = "telemetry.csv";
  bool dry_run = false;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
};

int cmd_train(const TrainArgs& a) {
  if (!std::filesystem::exists(a.config)) throw IoError("config '" + a.config + "' does not exist");
  ExperimentConfig cfg = load_experiment(a.config);
  if (a.seed) {
    cfg.seed = *a.seed;
    cfg.train.seed = *a.seed;
  }
  cfg.train.jobs = resolve_jobs(a.jobs);
  const auto mc = cfg.resolved_model();
  mc.validate();
  cfg.train.validate();
  const Json resolved = to_json(cfg);

  if (a.dry_run) {
    std::cout << resolved.dump(2) << "\n\n";
    std::cout << "m,T_tilde,phase,f_sequences,policy_sequences\n";
    const auto sched = cfg.train.curriculum();
    for (int m = 1; m <= cfg.train.iterations; ++m) {
      const auto [nf, np] = cfg.train.split(m);
      std::cout << m << ',' << data::curriculum_horizon(m, sched) << ','
                << (m > cfg.train.early_iterations ? "mixed" : "early") << ',' << nf << ',' << np << '\n';
    }
    return kOk;
  }

  auto ckpt_out = open_out(a.out);
  auto tel_out = open_out(a.telemetry);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train::train(cfg.prior, mc, cfg.train, [&](const train::IterationRecord& r) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream line;
    line << "m=" << r.m << " T=" << r.horizon << " loss=" << r.train_loss;
    if (r.ood) line << " ood_gap=" << r.ood->gap << " regret=" << *r.eval_regret_mean;
    line << " (" << std::fixed << std::setprecision(1) << secs << "s)\n";
    std::cerr << line.str();
  });
  ckpt_out.close();
  model::save_checkpoint(a.out, {mc, result.params, Json{{"config", resolved}, {"seed", cfg.seed}}});
  tel_out << std::setprecision(17);
  train::write_telemetry_csv(tel_out, result.telemetry, Json{{"config", resolved}, {"seed", cfg.seed}});
  if (!tel_out) throw IoError("write to '" + a.telemetry + "' failed");
  std::cout << "wrote " << a.out << " and " << a.telemetry << '\n';
  return kOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  PriorArgs prior;
  std::string config;
  std::string algos;
  std::optional<int> runs;
  std::optional<int> horizon;
  std::optional<std::uint64_t> seed;
  std::string out_csv;
  std::string summary;
  std::string plot;
  bool no_crn = false;
  std::string ucb_bonus;
  std::string posterior_temp;
  std::string rule;
  std::string checkpoint;
  int jobs = 0;
};

int cmd_bench(const BenchArgs& a) {
  ExperimentConfig cfg;
  PriorSpec prior;
  if (!a.config.empty()) {
    cfg = load_experiment(a.config);
    prior = cfg.prior;
    if (!a.prior.prior_file.empty() || a.prior.pool > 0) prior = a.prior.resolve();
  } else {
    prior = a.prior.resolve();
  }
  EvalSettings s = cfg.eval;
  if (!a.algos.empty()) s.algos = split_list(a.algos);
  if (a.runs) s.runs = *a.runs;
  if (a.horizon) s.horizon = *a.horizon;
  if (a.no_crn) s.common_random_numbers = false;
  try {
    if (!a.ucb_bonus.empty()) s = eval_settings_from_json([&] { Json j = to_json(s); j["ucb_bonus"] = a.ucb_bonus; return j; }());
    if (!a.posterior_temp.empty())
      s = eval_settings_from_json([&] { Json j = to_json(s); j["temperature"] = a.posterior_temp; return j; }());
    if (!a.rule.empty()) s.rule = bayes::parse_rule(a.rule);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (!a.checkpoint.empty()) s.checkpoint = a.checkpoint;
  if (s.runs < 1 || s.horizon < 1) throw UsageError("--runs and --horizon must be >= 1");
  if (s.algos.empty()) throw UsageError("--algos is empty");
  const std::uint64_t seed = a.seed.value_or(cfg.seed);

  const auto algos = make_algorithms(s.algos, prior, s);
  eval::EvalOptions opts;
  opts.common_random_numbers = s.common_random_numbers;
  opts.jobs = resolve_jobs(a.jobs);
  const auto reports = eval::compare(algos, prior, s.runs, s.horizon, seed, opts);

  const Json header{{"command", "bench"}, {"prior", to_json(prior)}, {"eval", to_json(s)}, {"seed", seed}};
  if (!a.out_csv.empty()) {
    auto out = open_out(a.out_csv);
    eval::write_regret_csv(out, reports, header);
    if (!out) throw IoError("write to '" + a.out_csv + "' failed");
  }
  if (!a.summary.empty()) {
    auto out = open_out(a.summary);
    out << eval::summary_json(reports, seed, header).dump(2) << '\n';
    if (!out) throw IoError("write to '" + a.summary + "' failed");
  }
  if (!a.plot.empty()) {
    auto out = open_out(a.plot);
    eval::write_plot_data(out, reports);
    if (!out) throw IoError("write to '" + a.plot + "' failed");
  }
  eval::write_final_table(std::cout, reports);
  return kOk;
}

// ---------------------------------------------------------------- counterexample

struct CounterexampleArgs {
  std::string kind;
  int horizon = 100;
  std::uint64_t seed = 0;
  std::string out_csv;
};

int cmd_counterexample(const CounterexampleArgs& a) {
  bayes::CounterexampleKind kind;
  try {
    kind = bayes::parse_counterexample(a.kind);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (a.horizon < 1) throw UsageError("--horizon must be >= 1");
  const auto r = run_counterexample(kind, a.horizon, a.seed);
  std::cout << std::setprecision(12);
  for (std::size_t g = 0; g < r.regret.size(); ++g)
    std::cout << "gamma" << g + 1 << ": regret " << r.regret[g] << " vs expected " << r.expected[g]
              << "  (regret/T " << r.regret[g] / a.horizon << ")\n";
  std::cout << "max |posterior mass - 0.5| = " << r.max_posterior_deviation << '\n';
  if (!a.out_csv.empty()) {
    auto out = open_out(a.out_csv);
    write_counterexample_csv(out, r, Json{{"command", "counterexample"}, {"kind", a.kind}, {"horizon", a.horizon}, {"seed", a.seed}});
    if (!out) throw IoError("write to '" + a.out_csv + "' failed");
  }
  if (r.max_regret_error > 1e-9) {
    std::ostringstream msg;
    msg << std::setprecision(17) << "regret mismatch: observed";
    for (double v : r.regret) msg << ' ' << v;
    throw CheckFailed(msg.str());
  }
  if (r.max_posterior_deviation > 1e-12) throw CheckFailed("posterior mass moved away from 1/2");
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  int coords = 200;
  std::uint64_t seed = 0;
  double corrupt = 0.0;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const auto results = model::gradient_check_suite(a.coords, a.seed, a.corrupt);
  const model::GradCheckResult* worst = &results.front();
  for (const auto& r : results) {
    std::cout << r.name << ": max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error
              << std::defaultfloat << " over " << r.coords << " coordinates (worst slice " << r.worst_slice << ")\n";
    if (r.max_rel_error > worst->max_rel_error) worst = &r;
  }
  std::cout << "max relative error " << std::scientific << worst->max_rel_error << std::defaultfloat << '\n';
  if (worst->max_rel_error > 1e-4)
    throw CheckFailed("gradient check failed in " + worst->name + ", worst slice " + worst->worst_slice);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision pretraining lab: environments, baselines, Bayes oracles and transformer policies"};
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("--jobs", jobs, "worker threads (0 = all cores; DPLAB_JOBS overrides)");

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "write a JSONL pretraining dataset");
  gen.prior.add_to(g);
  g->add_option("--n", gen.n, "number of sequences")->capture_default_str();
  g->add_option("--horizon", gen.horizon, "steps per sequence")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--policy", gen.policy, "'f' (noisy optimal) or a checkpoint path")->capture_default_str();
  g->add_option("--out", gen.out, "output JSONL path");
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--jobs", gen.jobs, "worker threads");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "pretrain a transformer policy");
  t->add_option("--config", tr.config, "experiment JSON")->required();
  t->add_option("--out", tr.out, "checkpoint path")->capture_default_str();
  t->add_option("--telemetry", tr.telemetry, "telemetry CSV path")->capture_default_str();
  t->add_flag("--dry-run", tr.dry_run, "validate and print the curriculum; write nothing");
  t->add_option("--seed", tr.seed, "override the config seed");
  t->add_option("--jobs", tr.jobs, "worker threads");

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "compare algorithms on a prior");
  be.prior.add_to(b);
  b->add_option("--config", be.config, "experiment JSON (prior and eval settings)");
  b->add_option("--algos", be.algos, "comma-separated algorithm names");
  b->add_option("--runs", be.runs, "environments per algorithm");
  b->add_option("--horizon", be.horizon, "steps per run");
  b->add_option("--seed", be.seed, "base seed");
  b->add_option("--out-csv", be.out_csv, "long-format regret CSV");
  b->add_option("--summary", be.summary, "summary JSON");
  b->add_option("--plot", be.plot, "plot series CSV");
  b->add_flag("--no-crn", be.no_crn, "independent streams per algorithm");
  b->add_option("--ucb-bonus", be.ucb_bonus, "standard | paper-literal");
  b->add_option("--posterior-temp", be.posterior_temp, "exact | literal");
  b->add_option("--rule", be.rule, "Alg* rule: sampling | averaging | median");
  b->add_option("--checkpoint", be.checkpoint, "checkpoint for the 'tf' algorithm");
  b->add_option("--jobs", be.jobs, "worker threads");

  CounterexampleArgs ce;
  auto* c = app.add_subcommand("counterexample", "posterior averaging on the linear-regret instances");
  c->add_option("--kind", ce.kind, "linear-bandit | pricing")->required();
  c->add_option("--horizon", ce.horizon)->capture_default_str();
  c->add_option("--seed", ce.seed)->capture_default_str();
  c->add_option("--out-csv", ce.out_csv, "per-step cumulative regret CSV");

  GradcheckArgs gc;
  auto* k = app.add_subcommand("gradcheck", "finite-difference check of every head/loss pairing");
  k->add_option("--coords", gc.coords, "coordinates per pairing")->capture_default_str()->check(CLI::PositiveNumber);
  k->add_option("--seed", gc.seed)->capture_default_str();
  k->add_option("--corrupt", gc.corrupt, "add this to one analytic gradient entry (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (jobs != 0) gen.jobs = tr.jobs = be.jobs = jobs;

  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) return cmd_train(tr);
    if (b->parsed()) return cmd_bench(be);
    if (c->parsed()) return cmd_counterexample(ce);
    if (k->parsed()) return cmd_gradcheck(gc);
  } catch (const train::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const CheckFailed& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n' << app.help();
    return kUsage;
  } catch (const AlgorithmError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const SchemaError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const data::DatasetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
