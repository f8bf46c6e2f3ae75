#include "dplab/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <stdexcept>

#include "dplab/parallel.hpp"
#include "dplab/rollout.hpp"

namespace dplab::eval {

namespace {

void write_header_lines(std::ostream& out, const Json& header) {
  if (!header.is_null()) out << "# " << header.dump() << '\n';
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

std::vector<double> RegretReport::finals() const {
  std::vector<double> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(r.empty() ? 0.0 : r.back());
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

RegretReport evaluate(const std::string& name, const PolicyFactory& factory, const PriorSpec& prior, int runs,
                      int horizon, const RngStream& base, const EvalOptions& options) {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  const RngStream root = options.common_random_numbers ? base : base.derive(name);
  RegretReport rep;
  rep.algorithm = name;
  rep.runs.resize(static_cast<std::size_t>(runs));
  std::vector<int> proj(static_cast<std::size_t>(runs), 0);
  parallel_for(static_cast<std::size_t>(runs), options.jobs, [&](std::size_t r) {
    const RngStream run = root.derive("run", r);
    RngStream env_rng = run.derive("env");
    const Environment env = sample_environment(prior, env_rng);
    auto policy = factory(env, horizon);
    const Trajectory traj = rollout(env, *policy, horizon, run.derive("rollout"));
    rep.runs[r] = cumulative_expected_regret(traj, env);
    proj[r] = traj.projections;
  });
  rep.projections = std::accumulate(proj.begin(), proj.end(), 0);
  const auto T = static_cast<std::size_t>(horizon);
  rep.mean.resize(T);
  rep.p05.resize(T);
  rep.p95.resize(T);
  std::vector<double> column(static_cast<std::size_t>(runs));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t r = 0; r < column.size(); ++r) column[r] = rep.runs[r][t];
    rep.mean[t] = mean_of(column);
    rep.p05[t] = quantile(column, 0.05);
    rep.p95[t] = quantile(column, 0.95);
  }
  const auto fin = rep.finals();
  rep.final_mean = mean_of(fin);
  rep.final_se = se_of(fin);
  return rep;
}

RegretReport evaluate(const std::string& name, const PolicyFactory& factory, const PriorSpec& prior, int runs,
                      int horizon, std::uint64_t seed, const EvalOptions& options) {
  return evaluate(name, factory, prior, runs, horizon, RngStream(seed).derive("eval"), options);
}

std::vector<RegretReport> compare(const std::vector<NamedFactory>& algos, const PriorSpec& prior, int runs,
                                  int horizon, std::uint64_t seed, const EvalOptions& options) {
  std::vector<RegretReport> out;
  out.reserve(algos.size());
  for (const auto& a : algos) out.push_back(evaluate(a.name, a.factory, prior, runs, horizon, seed, options));
  return out;
}

Interval bootstrap_mean_ci(const std::vector<double>& values, double level, int resamples, RngStream rng) {
  if (values.empty()) throw std::invalid_argument("bootstrap of an empty sample");
  if (resamples < 1) throw std::invalid_argument("resamples must be >= 1");
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[rng.uniform_index(values.size())];
    m = s / static_cast<double>(values.size());
  }
  const double tail = 0.5 * (1.0 - level);
  return {quantile(means, tail), quantile(means, 1.0 - tail)};
}

void write_regret_csv(std::ostream& out, const std::vector<RegretReport>& reports, const Json& header) {
  write_header_lines(out, header);
  out << "algo,run,t,regret\n";
  out << std::setprecision(17);
  for (const auto& rep : reports)
    for (std::size_t r = 0; r < rep.runs.size(); ++r)
      for (std::size_t t = 0; t < rep.runs[r].size(); ++t)
        out << rep.algorithm << ',' << r << ',' << t + 1 << ',' << rep.runs[r][t] << '\n';
}

Json summary_json(const std::vector<RegretReport>& reports, std::uint64_t seed, const Json& header) {
  Json algos = Json::array();
  const RngStream boot = RngStream(seed).derive("bootstrap");
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& rep = reports[i];
    const Interval ci = bootstrap_mean_ci(rep.finals(), 0.95, 2000, boot.derive(rep.algorithm, i));
    algos.push_back(Json{{"name", rep.algorithm},
                         {"runs", rep.runs.size()},
                         {"final_mean", rep.final_mean},
                         {"final_se", rep.final_se},
                         {"final_ci95", {ci.lo, ci.hi}},
                         {"projections", rep.projections},
                         {"mean", rep.mean},
                         {"p05", rep.p05},
                         {"p95", rep.p95}});
  }
  Json j{{"algorithms", algos}};
  if (!header.is_null()) j["header"] = header;
  return j;
}

void write_plot_data(std::ostream& out, const std::vector<RegretReport>& reports) {
  out << "algo,t,mean,p05,p95\n" << std::setprecision(17);
  for (const auto& rep : reports)
    for (std::size_t t = 0; t < rep.mean.size(); ++t)
      out << rep.algorithm << ',' << t + 1 << ',' << rep.mean[t] << ',' << rep.p05[t] << ',' << rep.p95[t] << '\n';
}

void write_final_table(std::ostream& out, const std::vector<RegretReport>& reports) {
  std::size_t width = 9;
  for (const auto& r : reports) width = std::max(width, r.algorithm.size());
  out << std::left << std::setw(static_cast<int>(width)) << "algorithm" << "  final_regret_mean  final_regret_se\n";
  for (const auto& r : reports)
    out << std::left << std::setw(static_cast<int>(width)) << r.algorithm << "  " << std::right << std::setw(17)
        << std::fixed << std::setprecision(4) << r.final_mean << "  " << std::setw(15) << r.final_se << '\n'
        << std::defaultfloat;
}

SurrogateResult surrogate_check(Family family, int samples, RngStream rng) {
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  PriorSpec prior;
  prior.family = family;
  // The Lipschitz bound holds for either newsvendor demand type, so both are drawn.
  if (family == Family::Newsvendor) prior.demand_mix = 0.5;
  SurrogateResult res;
  res.samples = samples;
  for (int s = 0; s < samples; ++s) {
    RngStream r = rng.derive("sample", static_cast<std::uint64_t>(s));
    const Environment env = sample_environment(prior, r);
    const Vector x = sample_context(env, r);
    const Vector a_star = optimal_action(env, x);
    double regret = 0.0;
    double loss = 0.0;
    double c = 0.0;
    switch (family) {
      case Family::Mab: {
        const int k = env.actions.arms;
        // Random logits with a random temperature, from near-uniform to near-point-mass.
        const double temp = r.uniform(0.0, 20.0);
        Vector logits(k);
        for (int a = 0; a < k; ++a) logits(a) = temp * r.normal();
        const Vector p = (logits.array() - logits.maxCoeff()).exp().matrix();
        const Vector prob = p / p.sum();
        const double best = env.arm_means.maxCoeff();
        for (int a = 0; a < k; ++a) regret += prob(a) * (best - env.arm_means(a));
        loss = -std::log(std::max(prob(arm_of(a_star)), 1e-300));
        c = best - env.arm_means.minCoeff();
        break;
      }
      case Family::Pricing: {
        const Vector a = Vector::Constant(1, r.uniform(env.actions.low, env.actions.high));
        regret = step_regret(env, x, a);
        loss = (a - a_star).squaredNorm();
        c = 2.0 * price_slope(env, x);
        break;
      }
      case Family::LinearBandit: {
        Vector dir(env.actions.dim);
        for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = r.normal();
        const double radius = std::pow(r.uniform(), 1.0 / static_cast<double>(env.actions.dim));
        const Vector a = dir.normalized() * radius * env.actions.radius;
        regret = step_regret(env, x, a);
        loss = (a - a_star).lpNorm<1>();
        c = 1.0;
        break;
      }
      case Family::Newsvendor: {
        const Vector a = Vector::Constant(1, r.uniform(env.actions.low, env.actions.high));
        regret = step_regret(env, x, a);
        loss = std::abs(a(0) - a_star(0));
        c = std::max(env.holding_cost, env.lost_sale_cost);
        break;
      }
    }
    res.max_violation = std::max(res.max_violation, regret - c * loss);
    res.max_regret = std::max(res.max_regret, regret);
  }
  return res;
}

}  // namespace dplab::eval
