#include "dplab/baselines.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dplab::baselines {

namespace {

double log_bonus(int horizon) { return std::sqrt(2.0 * std::log(static_cast<double>(horizon))); }

}  // namespace

void ArmStats::record(int arm, double reward) {
  auto& n = counts.at(static_cast<std::size_t>(arm));
  auto& m = means[static_cast<std::size_t>(arm)];
  ++n;
  m += (reward - m) / n;
}

int ArmStats::total() const {
  int s = 0;
  for (int n : counts) s += n;
  return s;
}

int ucb_act(const ArmStats& stats, int horizon, BonusMode mode) {
  const double c = log_bonus(horizon);
  if (mode == BonusMode::Standard) {
    // Round-robin over unpulled arms: the lowest-index one goes first.
    for (int a = 0; a < stats.arms(); ++a) {
      if (stats.counts[static_cast<std::size_t>(a)] == 0) return a;
    }
  }
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < stats.arms(); ++a) {
    const auto i = static_cast<std::size_t>(a);
    double score;
    if (mode == BonusMode::Standard) {
      score = stats.means[i] + std::sqrt(2.0 * std::log(static_cast<double>(horizon)) / stats.counts[i]);
    } else {
      score = stats.counts[i] == 0 ? std::numeric_limits<double>::infinity()
                                   : stats.means[i] + c / std::min(1, stats.counts[i]);
    }
    if (score > best_score) {
      best_score = score;
      best = a;
    }
  }
  return best;
}

int ts_act(const ArmStats& stats, int horizon, RngStream& rng, double scale) {
  const double c = log_bonus(horizon);
  int best = 0;
  double best_draw = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < stats.arms(); ++a) {
    const auto i = static_cast<std::size_t>(a);
    const double variance = scale * c / std::max(1, stats.counts[i]);
    const double mean = stats.counts[i] == 0 ? 0.0 : stats.means[i];
    const double draw = mean + std::sqrt(variance) * rng.normal();
    if (draw > best_draw) {
      best_draw = draw;
      best = a;
    }
  }
  return best;
}

RidgeState::RidgeState(int dim, double reg)
    : gram(Matrix::Identity(dim, dim) * reg), moment(Vector::Zero(dim)), regularizer(reg) {
  if (!(reg > 0.0)) throw std::invalid_argument("ridge regularizer must be positive");
}

void RidgeState::record(const Vector& z, double observation) {
  gram.noalias() += z * z.transpose();
  moment += observation * z;
}

Vector RidgeState::estimate() const { return gram.llt().solve(moment); }

Matrix RidgeState::inverse_gram() const {
  return gram.llt().solve(Matrix::Identity(gram.rows(), gram.cols()));
}

Vector linucb_act(const RidgeState& state, int horizon, double bonus_scale) {
  const int d = state.dim();
  const Vector w_hat = state.estimate();
  const Matrix s_inv = state.inverse_gram();
  const double beta = bonus_scale * log_bonus(horizon);

  auto objective = [&](const Vector& a) {
    return w_hat.dot(a) + beta * std::sqrt(std::max(0.0, a.dot(s_inv * a)));
  };
  auto gradient = [&](const Vector& a) -> Vector {
    const double nrm = std::sqrt(std::max(0.0, a.dot(s_inv * a)));
    Vector g = w_hat;
    if (nrm > 0.0) g += beta * (s_inv * a) / nrm;
    return g;
  };

  std::vector<Vector> starts;
  if (w_hat.norm() > 0.0) starts.push_back(w_hat / w_hat.norm());
  if (d == 1) {
    starts.push_back(Vector::Constant(1, 1.0));
    starts.push_back(Vector::Constant(1, -1.0));
  } else {
    for (int k = 0; k < 8; ++k) {
      Vector p = Vector::Zero(d);
      p(0) = std::cos(k * std::numbers::pi / 4.0);
      p(1) = std::sin(k * std::numbers::pi / 4.0);
      starts.push_back(p);
    }
  }

  Vector best = starts.front();
  double best_value = -std::numeric_limits<double>::infinity();
  for (Vector a : starts) {
    for (int iter = 0; iter < 200; ++iter) {
      const Vector g = gradient(a);
      const double gn = g.norm();
      if (gn == 0.0) break;
      Vector next = g / gn;
      const bool converged = (next - a).norm() < 1e-14;
      if (objective(next) < objective(a)) break;
      a = std::move(next);
      if (converged) break;
    }
    const double v = objective(a);
    if (v > best_value) {
      best_value = v;
      best = a;
    }
  }
  return best;
}

Vector lints_act(const RidgeState& state, int horizon, RngStream& rng, double cov_scale) {
  const int d = state.dim();
  const Vector w_hat = state.estimate();
  const Matrix cov = state.inverse_gram() * (cov_scale * log_bonus(horizon));
  Eigen::LLT<Matrix> llt(cov);
  const Matrix chol = llt.info() == Eigen::Success ? Matrix(llt.matrixL()) : Matrix::Zero(d, d);
  for (int attempt = 0; attempt < 2; ++attempt) {
    Vector z(d);
    for (int i = 0; i < d; ++i) z(i) = rng.normal();
    const Vector w = w_hat + chol * z;
    const double n = w.norm();
    if (n > 0.0) return w / n;
  }
  if (w_hat.norm() > 0.0) return w_hat / w_hat.norm();
  return Vector::Unit(d, 0);
}

Vector pricing_features(const Vector& context, double price) {
  Vector z(2 * context.size());
  z << context, price * context;
  return z;
}

namespace {

struct PricingEstimate {
  double intercept;  // w1^T X
  double slope;      // w2^T X
};

PricingEstimate plug_in(const Vector& theta, const Vector& context) {
  const auto d = context.size();
  return {theta.head(d).dot(context), -theta.tail(d).dot(context)};
}

}  // namespace

double ilse_price(const RidgeState& state, const Vector& context, const ActionSpace& space) {
  const auto est = plug_in(state.estimate(), context);
  if (!(est.slope > 0.0)) return space.midpoint()(0);
  return std::clamp(est.intercept / (2.0 * est.slope), space.low, space.high);
}

double cils_act(double ilse, double running_avg, int t) {
  const double delta = ilse - running_avg;
  const double threshold = std::pow(static_cast<double>(t), -0.25) / 10.0;
  if (std::abs(delta) < threshold) return running_avg + (delta >= 0.0 ? threshold : -threshold);
  return ilse;
}

double pricing_ts_price(double alpha, double beta, double fallback, const ActionSpace& space) {
  if (!(beta > 1e-6)) return fallback;
  return std::clamp(alpha / (2.0 * beta), space.low, space.high);
}

double pricing_ts_act(const RidgeState& state, const Vector& context, const ActionSpace& space,
                      RngStream& rng, double cov_scale) {
  const auto d = context.size();
  const auto est = plug_in(state.estimate(), context);
  // (alpha, beta) = P^T theta with P = blockdiag(X, -X); its covariance under
  // the ridge posterior is P^T gram^-1 P.
  Matrix p = Matrix::Zero(2 * d, 2);
  p.col(0).head(d) = context;
  p.col(1).tail(d) = -context;
  Matrix cov = cov_scale * (p.transpose() * state.inverse_gram() * p);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) llt.compute(cov + 1e-9 * Matrix::Identity(2, 2));
  Matrix chol = llt.info() == Eigen::Success ? Matrix(llt.matrixL()) : Matrix::Zero(2, 2);
  Vector z(2);
  z(0) = rng.normal();
  z(1) = rng.normal();
  const Vector draw = Vector(Eigen::Vector2d(est.intercept, est.slope)) + chol * z;
  return pricing_ts_price(draw(0), draw(1), ilse_price(state, context, space), space);
}

double pinball_objective(std::span<const Vector> contexts, std::span<const double> targets,
                         const Vector& beta, double q) {
  double s = 0.0;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const double r = targets[i] - beta.dot(contexts[i]);
    s += r >= 0.0 ? q * r : (q - 1.0) * r;
  }
  return contexts.empty() ? 0.0 : s / static_cast<double>(contexts.size());
}

Vector fit_quantile_regression(std::span<const Vector> contexts, std::span<const double> targets,
                               double q) {
  const auto n = static_cast<Eigen::Index>(contexts.size());
  if (n == 0) throw std::invalid_argument("quantile regression needs data");
  const auto d = contexts.front().size();
  Matrix x(n, d);
  Vector y(n);
  double mean_sq_norm = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = contexts[static_cast<std::size_t>(i)].transpose();
    y(i) = targets[static_cast<std::size_t>(i)];
    mean_sq_norm += x.row(i).squaredNorm();
  }
  mean_sq_norm /= static_cast<double>(n);
  const double c = 1.0 / std::max(mean_sq_norm, 1e-12);

  Vector beta = x.completeOrthogonalDecomposition().solve(y);
  Vector best = beta;
  double best_obj = pinball_objective(contexts, targets, beta, q);
  for (int k = 1; k <= 500; ++k) {
    Vector g = Vector::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = y(i) - x.row(i).dot(beta);
      const double psi = r > 0.0 ? q : (r < 0.0 ? q - 1.0 : 0.0);
      g -= psi * x.row(i).transpose();
    }
    g /= static_cast<double>(n);
    beta -= (c / std::sqrt(static_cast<double>(k))) * g;
    const double obj = pinball_objective(contexts, targets, beta, q);
    if (obj < best_obj) {
      best_obj = obj;
      best = beta;
    }
  }
  return best;
}

double erm_newsvendor_act(std::span<const StepRecord> steps, const Vector& context, double h,
                          double l, const ActionSpace& space) {
  if (static_cast<Eigen::Index>(steps.size()) < context.size() || steps.empty())
    return space.midpoint()(0);
  std::vector<Vector> xs;
  std::vector<double> ys;
  xs.reserve(steps.size());
  ys.reserve(steps.size());
  for (const auto& s : steps) {
    xs.push_back(s.context);
    ys.push_back(s.observation(0));
  }
  const Vector beta = fit_quantile_regression(xs, ys, l / (h + l));
  return std::clamp(beta.dot(context), space.low, space.high);
}

Vector fai_update(const Vector& w, const Vector& prev_context, double prev_order,
                  double prev_demand, int t, double h, double l) {
  const double root = std::sqrt(static_cast<double>(t));
  if (prev_demand < prev_order) return w - (h / root) * prev_context;
  return w + (l / root) * prev_context;
}

namespace {

constexpr std::array<std::string_view, 9> kNames = {"ucb",  "ts",         "linucb", "lints", "ilse",
                                                     "cils", "pricing-ts", "erm",    "fai"};

/// Baselines consume the history incrementally; `sync` feeds unseen steps.
class Incremental : public Policy {
 protected:
  template <typename F>
  void sync(const History& h, F&& on_step) {
    const auto& steps = h.steps();
    for (; seen_ < steps.size(); ++seen_) on_step(steps[seen_]);
  }

 private:
  std::size_t seen_ = 0;
};

class UcbPolicy final : public Incremental {
 public:
  UcbPolicy(int arms, int horizon, BonusMode mode) : stats_(arms), horizon_(horizon), mode_(mode) {}
  Vector act(const History& h, RngStream&) override {
    sync(h, [&](const StepRecord& s) { stats_.record(arm_of(s.action), s.observation(0)); });
    return arm_vector(ucb_act(stats_, horizon_, mode_));
  }

 private:
  ArmStats stats_;
  int horizon_;
  BonusMode mode_;
};

class TsPolicy final : public Incremental {
 public:
  TsPolicy(int arms, int horizon) : stats_(arms), horizon_(horizon) {}
  Vector act(const History& h, RngStream& rng) override {
    sync(h, [&](const StepRecord& s) { stats_.record(arm_of(s.action), s.observation(0)); });
    return arm_vector(ts_act(stats_, horizon_, rng));
  }
  bool randomized() const override { return true; }

 private:
  ArmStats stats_;
  int horizon_;
};

class LinearBanditPolicy final : public Incremental {
 public:
  LinearBanditPolicy(int dim, double reg, int horizon, bool sampling)
      : ridge_(dim, reg), horizon_(horizon), sampling_(sampling) {}
  Vector act(const History& h, RngStream& rng) override {
    sync(h, [&](const StepRecord& s) { ridge_.record(s.action, s.observation(0)); });
    return sampling_ ? lints_act(ridge_, horizon_, rng) : linucb_act(ridge_, horizon_);
  }
  bool randomized() const override { return sampling_; }

 private:
  RidgeState ridge_;
  int horizon_;
  bool sampling_;
};

class PricingPolicy final : public Incremental {
 public:
  enum class Kind { Ilse, Cils, Ts };
  PricingPolicy(Kind kind, int context_dim, double reg, ActionSpace space)
      : kind_(kind), ridge_(2 * context_dim, reg), space_(space) {}

  Vector act(const History& h, RngStream& rng) override {
    sync(h, [&](const StepRecord& s) {
      ridge_.record(pricing_features(s.context, s.action(0)), s.observation(0));
      price_sum_ += s.action(0);
    });
    const Vector& x = h.pending_context();
    const double ilse = ilse_price(ridge_, x, space_);
    double price = ilse;
    if (kind_ == Kind::Ts) {
      price = pricing_ts_act(ridge_, x, space_, rng);
    } else if (kind_ == Kind::Cils && !h.steps().empty()) {
      const double avg = price_sum_ / static_cast<double>(h.steps().size());
      price = cils_act(ilse, avg, static_cast<int>(h.t()));
    }
    return Vector::Constant(1, std::clamp(price, space_.low, space_.high));
  }
  bool randomized() const override { return kind_ == Kind::Ts; }

 private:
  Kind kind_;
  RidgeState ridge_;
  ActionSpace space_;
  double price_sum_ = 0.0;
};

class ErmPolicy final : public Policy {
 public:
  ErmPolicy(double h, double l, ActionSpace space) : h_(h), l_(l), space_(space) {}
  Vector act(const History& hist, RngStream&) override {
    return Vector::Constant(1, erm_newsvendor_act(hist.steps(), hist.pending_context(), h_, l_, space_));
  }

 private:
  double h_, l_;
  ActionSpace space_;
};

class FaiPolicy final : public Incremental {
 public:
  FaiPolicy(int dim, double h, double l, ActionSpace space) : dim_(dim), h_(h), l_(l), space_(space) {}
  Vector act(const History& hist, RngStream& rng) override {
    if (w_.size() == 0) {
      w_.resize(dim_);
      for (int i = 0; i < dim_; ++i) w_(i) = rng.uniform();
    }
    // Step tau+1 applies the gradient from step tau with rate 1/sqrt(tau+1).
    sync(hist, [&](const StepRecord& s) {
      ++updates_;
      w_ = fai_update(w_, s.context, s.action(0), s.observation(0), updates_ + 1, h_, l_);
    });
    return Vector::Constant(1, std::clamp(w_.dot(hist.pending_context()), space_.low, space_.high));
  }
  bool randomized() const override { return true; }

 private:
  int dim_;
  double h_, l_;
  ActionSpace space_;
  Vector w_;
  int updates_ = 0;
};

}  // namespace

std::span<const std::string_view> baseline_names() { return kNames; }

bool is_baseline(std::string_view name) {
  for (auto n : kNames) {
    if (n == name) return true;
  }
  return false;
}

bool baseline_supports(std::string_view name, Family family) {
  if (name == "ucb" || name == "ts") return family == Family::Mab;
  if (name == "linucb" || name == "lints") return family == Family::LinearBandit;
  if (name == "ilse" || name == "cils" || name == "pricing-ts") return family == Family::Pricing;
  if (name == "erm" || name == "fai") return family == Family::Newsvendor;
  return false;
}

std::unique_ptr<Policy> make_baseline(std::string_view name, const Environment& env, int horizon,
                                      const BaselineOptions& options) {
  if (!is_baseline(name)) throw std::invalid_argument("unknown baseline '" + std::string(name) + "'");
  if (!baseline_supports(name, env.family))
    throw std::invalid_argument("baseline '" + std::string(name) + "' does not support family " +
                                std::string(family_name(env.family)));
  // Ridge regularizer sigma^2 is the noise variance; keep it positive for
  // noiseless environments.
  const double reg = std::max(env.noise_variance, 1e-6);
  if (name == "ucb") return std::make_unique<UcbPolicy>(env.actions.arms, horizon, options.bonus);
  if (name == "ts") return std::make_unique<TsPolicy>(env.actions.arms, horizon);
  if (name == "linucb") return std::make_unique<LinearBanditPolicy>(env.actions.dim, reg, horizon, false);
  if (name == "lints") return std::make_unique<LinearBanditPolicy>(env.actions.dim, reg, horizon, true);
  if (name == "ilse")
    return std::make_unique<PricingPolicy>(PricingPolicy::Kind::Ilse, env.context_dim(), reg, env.actions);
  if (name == "cils")
    return std::make_unique<PricingPolicy>(PricingPolicy::Kind::Cils, env.context_dim(), reg, env.actions);
  if (name == "pricing-ts")
    return std::make_unique<PricingPolicy>(PricingPolicy::Kind::Ts, env.context_dim(), reg, env.actions);
  if (name == "erm") return std::make_unique<ErmPolicy>(env.holding_cost, env.lost_sale_cost, env.actions);
  return std::make_unique<FaiPolicy>(env.context_dim(), env.holding_cost, env.lost_sale_cost, env.actions);
}

}  // namespace dplab::baselines
