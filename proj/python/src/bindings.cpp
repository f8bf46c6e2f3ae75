#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dplab/bayes.hpp"
#include "dplab/evalsuite.hpp"
#include "dplab/experiment.hpp"
#include "dplab/gradcheck.hpp"
#include "dplab/parallel.hpp"
#include "dplab/pretrain_data.hpp"
#include "dplab/rollout.hpp"

namespace py = pybind11;
using namespace dplab;

namespace {

// Python containers cross the boundary as JSON text.
Json to_cpp(const py::object& obj) {
  return Json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object to_py(const Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

std::vector<double> to_list(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Json telemetry_json(const std::vector<train::IterationRecord>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json row{{"m", r.m}, {"T_tilde", r.horizon}, {"mixed", r.mixed}, {"f_sequences", r.f_sequences},
             {"policy_sequences", r.policy_sequences}, {"train_loss", r.train_loss}};
    row["f_loss"] = r.f_loss ? Json(*r.f_loss) : Json(nullptr);
    row["rollout_loss"] = r.rollout_loss ? Json(*r.rollout_loss) : Json(nullptr);
    row["ood_gap"] = r.ood ? Json(r.ood->gap) : Json(nullptr);
    row["eval_regret_mean"] = r.eval_regret_mean ? Json(*r.eval_regret_mean) : Json(nullptr);
    row["eval_regret_se"] = r.eval_regret_se ? Json(*r.eval_regret_se) : Json(nullptr);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_dplab, m) {
  m.doc() = "Decision pretraining lab: environments, baselines, Bayes oracles and transformer policies";

  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);
  py::register_exception<train::TrainingDiverged>(m, "TrainingDiverged", PyExc_ArithmeticError);
  // Malformed JSON values (wrong types) surface as SchemaError too.
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Json::exception& e) {
      py::set_error(py::module_::import("dplab._dplab").attr("SchemaError"), e.what());
    }
  });

  m.def("algorithm_names", &algorithm_names, "Names accepted by bench().");

  m.def(
      "sample_environment",
      [](const py::object& prior, std::uint64_t seed) {
        RngStream rng(seed);
        return to_py(to_json(sample_environment(prior_from_json(to_cpp(prior)), rng)));
      },
      "Draw one environment from a prior.", py::arg("prior"), py::arg("seed") = 0);

  m.def(
      "optimal_action",
      [](const py::object& env, const std::vector<double>& context) {
        return to_list(optimal_action(environment_from_json(to_cpp(env)), to_vector(context)));
      },
      "a*(X) projected onto the action space.", py::arg("env"), py::arg("context") = std::vector<double>{});

  m.def(
      "expected_reward",
      [](const py::object& env, const std::vector<double>& context, const std::vector<double>& action) {
        return expected_reward(environment_from_json(to_cpp(env)), to_vector(context), to_vector(action));
      },
      py::arg("env"), py::arg("context"), py::arg("action"));

  m.def(
      "posterior",
      [](const py::object& pool, const py::object& steps, const std::string& temperature) {
        std::vector<Environment> envs;
        for (const auto& e : to_cpp(pool)) envs.push_back(environment_from_json(e));
        if (envs.empty()) throw std::invalid_argument("pool is empty");
        const auto temp = temperature == "literal" ? bayes::Temperature::Literal : bayes::Temperature::Exact;
        if (temperature != "literal" && temperature != "exact")
          throw std::invalid_argument("temperature must be 'exact' or 'literal'");
        auto state = bayes::PosteriorState::uniform(std::move(envs), temp);
        for (const auto& s : to_cpp(steps)) {
          StepRecord step;
          step.context = s.contains("x") ? vector_from_json(s.at("x")) : Vector();
          step.action = vector_from_json(s.at("a"));
          step.observation = vector_from_json(s.at("o"));
          state = bayes::posterior_update(state, step);
        }
        return to_list(state.weights());
      },
      "Posterior weights over a finite pool after steps [{'x','a','o'}] from a uniform prior.", py::arg("pool"),
      py::arg("steps"), py::arg("temperature") = "exact");

  m.def(
      "generate_dataset",
      [](const py::object& prior, std::size_t n, int horizon, std::uint64_t seed, int jobs) {
        const auto p = prior_from_json(to_cpp(prior));
        std::vector<TrajectoryRecord> seqs;
        {
          py::gil_scoped_release release;
          seqs = data::generate_dataset(p, data::noisy_optimal_factory(), n, horizon,
                                        RngStream(seed).derive("gen-data"), data::kGeneratorF, resolve_jobs(jobs));
        }
        Json out = Json::array();
        for (const auto& s : seqs) out.push_back(to_json(s));
        return to_py(out);
      },
      "Labelled sequences rolled out by the noisy optimal decision function f.", py::arg("prior"), py::arg("n"),
      py::arg("horizon"), py::arg("seed") = 0, py::arg("jobs") = 1);

  m.def(
      "bench",
      [](const py::object& prior, const std::vector<std::string>& algos, int runs, int horizon, std::uint64_t seed,
         const py::object& settings, int jobs) {
        const auto p = prior_from_json(to_cpp(prior));
        EvalSettings s = settings.is_none() ? EvalSettings{} : eval_settings_from_json(to_cpp(settings));
        s.algos = algos;
        s.runs = runs;
        s.horizon = horizon;
        eval::EvalOptions opts;
        opts.common_random_numbers = s.common_random_numbers;
        opts.jobs = resolve_jobs(jobs);
        std::vector<eval::RegretReport> reports;
        const auto factories = make_algorithms(s.algos, p, s);
        {
          py::gil_scoped_release release;
          reports = eval::compare(factories, p, runs, horizon, seed, opts);
        }
        Json summary = eval::summary_json(reports, seed, Json{{"prior", to_json(p)}, {"eval", to_json(s)}, {"seed", seed}});
        for (std::size_t i = 0; i < reports.size(); ++i) summary["algorithms"][i]["finals"] = reports[i].finals();
        return to_py(summary);
      },
      "Compare algorithms on a prior; returns the summary with per-run final regrets.", py::arg("prior"),
      py::arg("algos"), py::arg("runs") = 100, py::arg("horizon") = 100, py::arg("seed") = 0,
      py::arg("settings") = py::none(), py::arg("jobs") = 1);

  m.def(
      "train",
      [](const py::object& config, const std::string& checkpoint, int jobs) {
        ExperimentConfig cfg = experiment_from_json(to_cpp(config));
        cfg.train.jobs = resolve_jobs(jobs);
        const auto mc = cfg.resolved_model();
        train::TrainResult result;
        {
          py::gil_scoped_release release;
          result = train::train(cfg.prior, mc, cfg.train);
        }
        if (!checkpoint.empty())
          model::save_checkpoint(checkpoint, {mc, result.params, Json{{"config", to_json(cfg)}, {"seed", cfg.seed}}});
        return to_py(Json{{"config", to_json(cfg)},
                          {"telemetry", telemetry_json(result.telemetry)},
                          {"param_digest", model::param_digest(result.params)},
                          {"num_params", result.params.size()}});
      },
      "Run the pretraining loop on an experiment config; optionally save a checkpoint.", py::arg("config"),
      py::arg("checkpoint") = "", py::arg("jobs") = 1);

  m.def(
      "counterexample",
      [](const std::string& kind, int horizon, std::uint64_t seed) {
        const auto r = run_counterexample(bayes::parse_counterexample(kind), horizon, seed);
        return to_py(Json{{"regret", r.regret},
                          {"expected", r.expected},
                          {"max_posterior_deviation", r.max_posterior_deviation},
                          {"max_regret_error", r.max_regret_error}});
      },
      "Posterior averaging on a two-environment instance with linear regret.", py::arg("kind"),
      py::arg("horizon") = 100, py::arg("seed") = 0);

  m.def(
      "gradcheck",
      [](int coords, std::uint64_t seed, double corrupt) {
        Json out = Json::array();
        for (const auto& r : model::gradient_check_suite(coords, seed, corrupt))
          out.push_back({{"name", r.name}, {"max_rel_error", r.max_rel_error}, {"worst_slice", r.worst_slice},
                         {"coords", r.coords}});
        return to_py(out);
      },
      "Finite-difference check of every head/loss pairing.", py::arg("coords") = 200, py::arg("seed") = 0,
      py::arg("corrupt") = 0.0);

  m.def(
      "surrogate_check",
      [](const std::string& family, int samples, std::uint64_t seed) {
        const auto r = eval::surrogate_check(parse_family(family), samples, RngStream(seed));
        return to_py(Json{{"max_violation", r.max_violation}, {"max_regret", r.max_regret}, {"samples", r.samples}});
      },
      "Max of regret - C * loss over random single-step instances.", py::arg("family"), py::arg("samples") = 1000,
      py::arg("seed") = 0);
}
