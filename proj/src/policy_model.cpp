#include "dplab/policy_model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace dplab::model {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
constexpr char kMagic[8] = {'D', 'P', 'L', 'A', 'B', 'C', 'K', '1'};

using CMap = Eigen::Map<const Matrix>;
using MMap = Eigen::Map<Matrix>;
using CVec = Eigen::Map<const Vector>;
using MVec = Eigen::Map<Vector>;

CMap cmat(const Vector& p, const Slice& s) { return CMap(p.data() + s.offset, s.rows, s.cols); }
CVec cvec(const Vector& p, const Slice& s) { return CVec(p.data() + s.offset, s.rows); }
MMap mmat(Vector& p, const Slice& s) { return MMap(p.data() + s.offset, s.rows, s.cols); }
MVec mvec(Vector& p, const Slice& s) { return MVec(p.data() + s.offset, s.rows); }

void layer_norm(const Matrix& x, const CVec& g, const CVec& b, Matrix& y, Matrix& xhat, Vector& rstd) {
  const auto n = x.rows();
  y.resize(n, x.cols());
  xhat.resize(n, x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const auto c = (x.row(i).array() - mu).eval();
    const double var = c.square().mean();
    const double r = 1.0 / std::sqrt(var + kLnEps);
    rstd(i) = r;
    xhat.row(i) = c * r;
    y.row(i) = (xhat.row(i).array() * g.transpose().array() + b.transpose().array()).matrix();
  }
}

// Accumulates dgain/dbias and returns dx.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Vector& rstd, const CVec& g,
                           MVec dg, MVec db) {
  dg += dy.cwiseProduct(xhat).colwise().sum().transpose();
  db += dy.colwise().sum().transpose();
  Matrix dxhat = dy.array().rowwise() * g.transpose().array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).mean();
    const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
    dx.row(i) = rstd(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
  }
  return dx;
}

Matrix linear(const Matrix& x, const CMap& w, const CVec& b) {
  Matrix y = x * w.transpose();
  y.rowwise() += b.transpose();
  return y;
}

// dy -> dx, accumulating dW and db.
Matrix linear_backward(const Matrix& dy, const Matrix& x, const CMap& w, MMap dw, MVec db) {
  dw.noalias() += dy.transpose() * x;
  db += dy.colwise().sum().transpose();
  return dy * w;
}

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u))); }
double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + kGeluA * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, RngStream& rng) {
  Matrix m(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform() >= p ? keep : 0.0;
  return m;
}

struct LayerSlices {
  const Slice *ln1_g, *ln1_b, *qkv_w, *qkv_b, *proj_w, *proj_b, *ln2_g, *ln2_b, *fc1_w, *fc1_b,
      *fc2_w, *fc2_b;
};

LayerSlices layer_slices(const ParamLayout& layout, int i) {
  const std::string p = "block" + std::to_string(i) + ".";
  return {&layout.at(p + "ln1.g"),      &layout.at(p + "ln1.b"),      &layout.at(p + "attn.qkv.w"),
          &layout.at(p + "attn.qkv.b"), &layout.at(p + "attn.proj.w"), &layout.at(p + "attn.proj.b"),
          &layout.at(p + "ln2.g"),      &layout.at(p + "ln2.b"),      &layout.at(p + "mlp.fc1.w"),
          &layout.at(p + "mlp.fc1.b"),  &layout.at(p + "mlp.fc2.w"),  &layout.at(p + "mlp.fc2.b")};
}

// Loss value and d loss / d predictions.
double loss_with_grad(const Predictions& pred, std::span<const Vector> labels, LossKind kind,
                      std::vector<double>* per_position, Matrix* dpred) {
  const auto t = pred.rows();
  if (static_cast<std::size_t>(t) != labels.size())
    throw std::invalid_argument("prediction/label count mismatch");
  if (t == 0) throw std::invalid_argument("loss over zero positions");
  if (dpred) dpred->setZero(pred.rows(), pred.cols());
  const double inv_t = 1.0 / static_cast<double>(t);
  double total = 0.0;
  for (Eigen::Index i = 0; i < t; ++i) {
    const Vector& y = labels[static_cast<std::size_t>(i)];
    double li = 0.0;
    switch (kind) {
      case LossKind::CrossEntropy: {
        const double yv = y(0);
        const auto k = pred.cols();
        if (!(yv >= 0.0) || yv >= static_cast<double>(k) || yv != std::floor(yv))
          throw std::out_of_range("arm label " + std::to_string(yv) + " outside 0.." +
                                  std::to_string(k - 1));
        const auto arm = static_cast<Eigen::Index>(yv);
        const double top = pred.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (pred.row(i).array() - top).exp().matrix();
        const double z = e.sum();
        li = std::log(z) + top - pred(i, arm);
        if (dpred) {
          dpred->row(i) = e / z * inv_t;
          (*dpred)(i, arm) -= inv_t;
        }
        break;
      }
      case LossKind::Squared: {
        if (y.size() != pred.cols()) throw std::invalid_argument("label width mismatch");
        const Eigen::RowVectorXd r = pred.row(i) - y.transpose();
        li = r.squaredNorm();
        if (dpred) dpred->row(i) = 2.0 * inv_t * r;
        break;
      }
      case LossKind::Absolute: {
        if (y.size() != pred.cols()) throw std::invalid_argument("label width mismatch");
        const Eigen::RowVectorXd r = pred.row(i) - y.transpose();
        li = r.cwiseAbs().sum();
        if (dpred)
          for (Eigen::Index c = 0; c < r.size(); ++c)
            (*dpred)(i, c) = inv_t * static_cast<double>((r(c) > 0.0) - (r(c) < 0.0));
        break;
      }
    }
    if (per_position) per_position->push_back(li);
    total += li;
  }
  return total * inv_t;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

std::string_view head_name(HeadKind h) {
  return h == HeadKind::SoftmaxOverArms ? "softmax" : "continuous";
}

HeadKind parse_head(std::string_view name) {
  if (name == "softmax") return HeadKind::SoftmaxOverArms;
  if (name == "continuous") return HeadKind::ContinuousVector;
  throw std::invalid_argument("unknown head kind '" + std::string(name) + "' (expected softmax|continuous)");
}

std::string_view loss_name(LossKind k) {
  switch (k) {
    case LossKind::CrossEntropy:
      return "cross-entropy";
    case LossKind::Squared:
      return "squared";
    case LossKind::Absolute:
      return "absolute";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  if (name == "cross-entropy" || name == "cross_entropy") return LossKind::CrossEntropy;
  if (name == "squared") return LossKind::Squared;
  if (name == "absolute") return LossKind::Absolute;
  throw std::invalid_argument("unknown loss '" + std::string(name) +
                              "' (expected cross-entropy|squared|absolute)");
}

LossKind default_loss(Family family) {
  switch (family) {
    case Family::Mab:
      return LossKind::CrossEntropy;
    case Family::Pricing:
      return LossKind::Squared;
    case Family::LinearBandit:
    case Family::Newsvendor:
      return LossKind::Absolute;
  }
  return LossKind::CrossEntropy;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (layers < 0) fail("layers must be >= 0");
  if (heads < 1) fail("heads must be >= 1");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
  if (context_dim < 0 || observation_dim < 0) fail("negative input width");
  if (max_prompt_len < 1) fail("max_prompt_len must be >= 1");
  if (output_dim() < 1) fail("action space has no coordinates");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  const bool discrete = actions.kind == ActionSpace::Kind::Discrete;
  if (discrete != (head == HeadKind::SoftmaxOverArms))
    fail("softmax head requires arm actions and continuous head requires vector actions");
}

ModelConfig ModelConfig::for_prior(const PriorSpec& prior, int horizon) {
  ModelConfig c;
  c.context_dim = prior.context_dim();
  c.observation_dim = 1;
  c.actions = prior.action_space();
  c.head = prior.family == Family::Mab ? HeadKind::SoftmaxOverArms : HeadKind::ContinuousVector;
  c.max_prompt_len = 2 * horizon - 1;
  return c;
}

Json to_json(const ModelConfig& c) {
  return Json{{"layers", c.layers},
              {"heads", c.heads},
              {"embed_dim", c.embed_dim},
              {"context_dim", c.context_dim},
              {"observation_dim", c.observation_dim},
              {"actions", dplab::to_json(c.actions)},
              {"max_prompt_len", c.max_prompt_len},
              {"head", head_name(c.head)},
              {"dropout", c.dropout}};
}

ModelConfig model_config_from_json(const Json& j) {
  require_known_keys(j,
                     {"layers", "heads", "embed_dim", "context_dim", "observation_dim", "actions",
                      "max_prompt_len", "head", "dropout"},
                     "model");
  ModelConfig c;
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.context_dim = j.value("context_dim", c.context_dim);
  c.observation_dim = j.value("observation_dim", c.observation_dim);
  if (j.contains("actions")) c.actions = action_space_from_json(j.at("actions"));
  c.max_prompt_len = j.value("max_prompt_len", c.max_prompt_len);
  c.head = parse_head(j.value("head", std::string(head_name(c.head))));
  c.dropout = j.value("dropout", c.dropout);
  c.validate();
  return c;
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  c.validate();
  const int d = c.embed_dim;
  add("embed.feature.w", d, c.feature_dim());
  add("embed.feature.b", d);
  add("embed.label.w", d, c.label_dim());
  add("embed.label.b", d);
  add("embed.pos", c.max_prompt_len, d);
  for (int i = 0; i < c.layers; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    add(p + "ln1.g", d);
    add(p + "ln1.b", d);
    add(p + "attn.qkv.w", 3 * d, d);
    add(p + "attn.qkv.b", 3 * d);
    add(p + "attn.proj.w", d, d);
    add(p + "attn.proj.b", d);
    add(p + "ln2.g", d);
    add(p + "ln2.b", d);
    add(p + "mlp.fc1.w", 4 * d, d);
    add(p + "mlp.fc1.b", 4 * d);
    add(p + "mlp.fc2.w", d, 4 * d);
    add(p + "mlp.fc2.b", d);
  }
  add("ln_f.g", d);
  add("ln_f.b", d);
  add("head.w", c.output_dim(), d);
  add("head.b", c.output_dim());
}

void ParamLayout::add(std::string name, int rows, int cols) {
  Slice s{std::move(name), size_, rows, cols};
  size_ += s.size();
  slices_.push_back(std::move(s));
}

const Slice& ParamLayout::at(std::string_view name) const {
  for (const auto& s : slices_)
    if (s.name == name) return s;
  throw std::out_of_range("no parameter slice named '" + std::string(name) + "'");
}

const Slice& ParamLayout::slice_of(std::size_t i) const {
  for (const auto& s : slices_)
    if (i >= s.offset && i < s.offset + s.size()) return s;
  throw std::out_of_range("parameter index out of range");
}

std::size_t ParamLayout::expected_count(const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.embed_dim);
  const auto f = static_cast<std::size_t>(c.feature_dim());
  const auto a = static_cast<std::size_t>(c.label_dim());
  const auto o = static_cast<std::size_t>(c.output_dim());
  const auto lmax = static_cast<std::size_t>(c.max_prompt_len);
  const auto layers = static_cast<std::size_t>(c.layers);
  return d * (f + 1) + d * (a + 1) + lmax * d + layers * (12 * d * d + 13 * d) + 2 * d + o * (d + 1);
}

Vector init_params(const ModelConfig& config, std::uint64_t seed) {
  const ParamLayout layout(config);
  Vector p = Vector::Zero(static_cast<Eigen::Index>(layout.size()));
  const RngStream base = RngStream(seed).derive("init");
  std::uint64_t idx = 0;
  for (const auto& s : layout.slices()) {
    RngStream rng = base.derive(s.name, idx++);
    const auto begin = static_cast<Eigen::Index>(s.offset);
    const auto n = static_cast<Eigen::Index>(s.size());
    const bool is_gain = s.name.ends_with(".g");
    const bool is_weight = s.name.ends_with(".w");
    if (is_gain) {
      p.segment(begin, n).setOnes();
    } else if (s.name == "embed.pos") {
      for (Eigen::Index i = 0; i < n; ++i) p(begin + i) = 0.02 * rng.normal();
    } else if (is_weight) {
      const double sd = s.cols > 0 ? 1.0 / std::sqrt(static_cast<double>(s.cols)) : 0.0;
      for (Eigen::Index i = 0; i < n; ++i) p(begin + i) = sd * rng.normal();
    }
  }
  return p;
}

Prompt build_prompt(std::span<const StepRecord> steps, std::size_t t, const ModelConfig& config) {
  if (t < 1 || t > steps.size()) throw std::out_of_range("prompt decision index out of range");
  Prompt p;
  p.types.reserve(2 * t - 1);
  p.values.reserve(2 * t - 1);
  const int cd = config.context_dim;
  const int od = config.observation_dim;
  for (std::size_t tau = 0; tau < t; ++tau) {
    Vector f = Vector::Zero(cd + od);
    const auto& ctx = steps[tau].context;
    if (ctx.size() != cd) throw std::invalid_argument("context width does not match the model");
    f.head(cd) = ctx;
    if (tau > 0) {
      const auto& o = steps[tau - 1].observation;
      if (o.size() != od) throw std::invalid_argument("observation width does not match the model");
      f.tail(od) = o;
    }
    p.types.push_back(ElementType::Feature);
    p.values.push_back(std::move(f));
    if (tau + 1 < t) {
      const Vector& a = steps[tau].action;
      Vector enc;
      if (config.actions.kind == ActionSpace::Kind::Discrete) {
        enc = Vector::Zero(config.actions.arms);
        const int arm = arm_of(a);
        if (arm < 0 || arm >= config.actions.arms) throw std::out_of_range("arm outside the model's range");
        enc(arm) = 1.0;
      } else {
        enc = a;
      }
      p.types.push_back(ElementType::Label);
      p.values.push_back(std::move(enc));
    }
  }
  return p;
}

Prompt build_prompt(const History& history, const ModelConfig& config) {
  if (!history.has_pending()) throw std::logic_error("history has no pending context");
  std::vector<StepRecord> steps = history.steps();
  steps.push_back(StepRecord{history.pending_context(), Vector(), Vector(), std::nullopt});
  return build_prompt(steps, steps.size(), config);
}

std::vector<Vector> prompt_labels(std::span<const StepRecord> steps, std::size_t t) {
  std::vector<Vector> out;
  out.reserve(t);
  for (std::size_t i = 0; i < t; ++i) {
    if (!steps[i].optimal_action) throw std::invalid_argument("step without an optimal-action label");
    out.push_back(*steps[i].optimal_action);
  }
  return out;
}

LossValue loss(const Predictions& predictions, std::span<const Vector> labels, LossKind kind) {
  LossValue v;
  v.mean = loss_with_grad(predictions, labels, kind, &v.per_position, nullptr);
  return v;
}

struct PolicyModel::Cache {
  struct Layer {
    Matrix x_in, xhat1, h1, qkv, cat, attn_mask, x_mid, xhat2, h2, u, gu, mlp_mask;
    Vector rstd1, rstd2;
    std::vector<Matrix> probs;
  };
  std::vector<Layer> layers;
  Matrix x_final, xhatf, hf, head_in;
  Vector rstdf;
};

PolicyModel::PolicyModel(ModelConfig config) : config_(std::move(config)), layout_(config_) {}

Predictions PolicyModel::run(const Vector& params, const Prompt& prompt, Cache* cache,
                             RngStream* dropout_rng) const {
  const auto len = static_cast<Eigen::Index>(prompt.size());
  if (len == 0) throw std::invalid_argument("empty prompt");
  if (len > config_.max_prompt_len)
    throw std::length_error("prompt of " + std::to_string(len) + " elements exceeds max_prompt_len " +
                            std::to_string(config_.max_prompt_len));
  if (static_cast<std::size_t>(params.size()) != layout_.size())
    throw std::invalid_argument("parameter vector does not match the model layout");
  const int d = config_.embed_dim;
  const int nh = config_.heads;
  const int hd = config_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const bool drop = dropout_rng != nullptr && config_.dropout > 0.0;

  const auto wf = cmat(params, layout_.at("embed.feature.w"));
  const auto bf = cvec(params, layout_.at("embed.feature.b"));
  const auto wl = cmat(params, layout_.at("embed.label.w"));
  const auto bl = cvec(params, layout_.at("embed.label.b"));
  const auto pos = cmat(params, layout_.at("embed.pos"));

  Matrix x(len, d);
  for (Eigen::Index p = 0; p < len; ++p) {
    const Vector& v = prompt.values[static_cast<std::size_t>(p)];
    if (prompt.types[static_cast<std::size_t>(p)] == ElementType::Feature) {
      if (v.size() != wf.cols()) throw std::invalid_argument("feature element width mismatch");
      x.row(p) = (wf * v + bf).transpose() + pos.row(p);
    } else {
      if (v.size() != wl.cols()) throw std::invalid_argument("label element width mismatch");
      x.row(p) = (wl * v + bl).transpose() + pos.row(p);
    }
  }

  Cache local;
  Cache& c = cache ? *cache : local;
  c.layers.assign(static_cast<std::size_t>(config_.layers), {});
  for (int li = 0; li < config_.layers; ++li) {
    const LayerSlices s = layer_slices(layout_, li);
    auto& L = c.layers[static_cast<std::size_t>(li)];
    L.x_in = x;
    layer_norm(x, cvec(params, *s.ln1_g), cvec(params, *s.ln1_b), L.h1, L.xhat1, L.rstd1);
    L.qkv = linear(L.h1, cmat(params, *s.qkv_w), cvec(params, *s.qkv_b));
    L.cat.resize(len, d);
    L.probs.resize(static_cast<std::size_t>(nh));
    for (int h = 0; h < nh; ++h) {
      const auto q = L.qkv.middleCols(h * hd, hd);
      const auto k = L.qkv.middleCols(d + h * hd, hd);
      const auto v = L.qkv.middleCols(2 * d + h * hd, hd);
      Matrix sc = (q * k.transpose()) * scale;
      Matrix& pr = L.probs[static_cast<std::size_t>(h)];
      pr.setZero(len, len);
      for (Eigen::Index i = 0; i < len; ++i) {
        const double top = sc.row(i).head(i + 1).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          pr(i, j) = std::exp(sc(i, j) - top);
          z += pr(i, j);
        }
        pr.row(i).head(i + 1) /= z;
      }
      L.cat.middleCols(h * hd, hd).noalias() = pr * v;
    }
    Matrix attn_out = linear(L.cat, cmat(params, *s.proj_w), cvec(params, *s.proj_b));
    if (drop) {
      L.attn_mask = dropout_mask(len, d, config_.dropout, *dropout_rng);
      attn_out = attn_out.cwiseProduct(L.attn_mask);
    } else {
      L.attn_mask.resize(0, 0);
    }
    L.x_mid = L.x_in + attn_out;
    layer_norm(L.x_mid, cvec(params, *s.ln2_g), cvec(params, *s.ln2_b), L.h2, L.xhat2, L.rstd2);
    L.u = linear(L.h2, cmat(params, *s.fc1_w), cvec(params, *s.fc1_b));
    L.gu = L.u.unaryExpr([](double u) { return gelu(u); });
    Matrix mlp_out = linear(L.gu, cmat(params, *s.fc2_w), cvec(params, *s.fc2_b));
    if (drop) {
      L.mlp_mask = dropout_mask(len, d, config_.dropout, *dropout_rng);
      mlp_out = mlp_out.cwiseProduct(L.mlp_mask);
    } else {
      L.mlp_mask.resize(0, 0);
    }
    x = L.x_mid + mlp_out;
  }
  c.x_final = x;
  layer_norm(x, cvec(params, layout_.at("ln_f.g")), cvec(params, layout_.at("ln_f.b")), c.hf, c.xhatf,
             c.rstdf);

  const auto t = static_cast<Eigen::Index>(prompt.decisions());
  c.head_in.resize(t, d);
  Eigen::Index row = 0;
  for (Eigen::Index p = 0; p < len; ++p)
    if (prompt.types[static_cast<std::size_t>(p)] == ElementType::Feature) c.head_in.row(row++) = c.hf.row(p);
  if (row != t) throw std::invalid_argument("prompt must alternate feature and label elements");
  return linear(c.head_in, cmat(params, layout_.at("head.w")), cvec(params, layout_.at("head.b")));
}

Predictions PolicyModel::forward(const Vector& params, const Prompt& prompt) const {
  return run(params, prompt, nullptr, nullptr);
}

double PolicyModel::loss_and_gradient(const Vector& params, const Prompt& prompt,
                                      std::span<const Vector> labels, LossKind kind, Vector& out,
                                      RngStream* dropout_rng) const {
  if (static_cast<std::size_t>(out.size()) != layout_.size())
    throw std::invalid_argument("gradient vector does not match the model layout");
  // Built in a fresh buffer and added once, so accumulation is a plain sum.
  Vector grad = Vector::Zero(out.size());
  Cache c;
  const Predictions pred = run(params, prompt, &c, dropout_rng);
  Matrix dpred;
  const double value = loss_with_grad(pred, labels, kind, nullptr, &dpred);

  const auto len = static_cast<Eigen::Index>(prompt.size());
  const int d = config_.embed_dim;
  const int nh = config_.heads;
  const int hd = config_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  const Matrix dhead_in = linear_backward(dpred, c.head_in, cmat(params, layout_.at("head.w")),
                                          mmat(grad, layout_.at("head.w")), mvec(grad, layout_.at("head.b")));
  Matrix dhf = Matrix::Zero(len, d);
  Eigen::Index row = 0;
  for (Eigen::Index p = 0; p < len; ++p)
    if (prompt.types[static_cast<std::size_t>(p)] == ElementType::Feature) dhf.row(p) = dhead_in.row(row++);
  Matrix dx = layer_norm_backward(dhf, c.xhatf, c.rstdf, cvec(params, layout_.at("ln_f.g")),
                                  mvec(grad, layout_.at("ln_f.g")), mvec(grad, layout_.at("ln_f.b")));

  for (int li = config_.layers - 1; li >= 0; --li) {
    const LayerSlices s = layer_slices(layout_, li);
    const auto& L = c.layers[static_cast<std::size_t>(li)];

    Matrix dmlp = dx;
    if (L.mlp_mask.size() > 0) dmlp = dmlp.cwiseProduct(L.mlp_mask);
    Matrix dgu = linear_backward(dmlp, L.gu, cmat(params, *s.fc2_w), mmat(grad, *s.fc2_w), mvec(grad, *s.fc2_b));
    const Matrix du = dgu.cwiseProduct(L.u.unaryExpr([](double u) { return gelu_grad(u); }));
    const Matrix dh2 = linear_backward(du, L.h2, cmat(params, *s.fc1_w), mmat(grad, *s.fc1_w), mvec(grad, *s.fc1_b));
    Matrix dx_mid = dx + layer_norm_backward(dh2, L.xhat2, L.rstd2, cvec(params, *s.ln2_g),
                                             mvec(grad, *s.ln2_g), mvec(grad, *s.ln2_b));

    Matrix dattn = dx_mid;
    if (L.attn_mask.size() > 0) dattn = dattn.cwiseProduct(L.attn_mask);
    const Matrix dcat = linear_backward(dattn, L.cat, cmat(params, *s.proj_w), mmat(grad, *s.proj_w),
                                        mvec(grad, *s.proj_b));
    Matrix dqkv = Matrix::Zero(len, 3 * d);
    for (int h = 0; h < nh; ++h) {
      const auto q = L.qkv.middleCols(h * hd, hd);
      const auto k = L.qkv.middleCols(d + h * hd, hd);
      const auto v = L.qkv.middleCols(2 * d + h * hd, hd);
      const Matrix& pr = L.probs[static_cast<std::size_t>(h)];
      const auto dout = dcat.middleCols(h * hd, hd);
      const Matrix dp = dout * v.transpose();
      dqkv.middleCols(2 * d + h * hd, hd).noalias() = pr.transpose() * dout;
      Matrix ds = pr.cwiseProduct(dp);
      const Vector rs = ds.rowwise().sum();
      ds -= (pr.array().colwise() * rs.array()).matrix();
      dqkv.middleCols(h * hd, hd).noalias() = (ds * k) * scale;
      dqkv.middleCols(d + h * hd, hd).noalias() = (ds.transpose() * q) * scale;
    }
    const Matrix dh1 = linear_backward(dqkv, L.h1, cmat(params, *s.qkv_w), mmat(grad, *s.qkv_w),
                                       mvec(grad, *s.qkv_b));
    dx = dx_mid + layer_norm_backward(dh1, L.xhat1, L.rstd1, cvec(params, *s.ln1_g), mvec(grad, *s.ln1_g),
                                      mvec(grad, *s.ln1_b));
  }

  auto gwf = mmat(grad, layout_.at("embed.feature.w"));
  auto gbf = mvec(grad, layout_.at("embed.feature.b"));
  auto gwl = mmat(grad, layout_.at("embed.label.w"));
  auto gbl = mvec(grad, layout_.at("embed.label.b"));
  auto gpos = mmat(grad, layout_.at("embed.pos"));
  for (Eigen::Index p = 0; p < len; ++p) {
    const Vector de = dx.row(p).transpose();
    const Vector& v = prompt.values[static_cast<std::size_t>(p)];
    gpos.row(p) += dx.row(p);
    if (prompt.types[static_cast<std::size_t>(p)] == ElementType::Feature) {
      gwf.noalias() += de * v.transpose();
      gbf += de;
    } else {
      gwl.noalias() += de * v.transpose();
      gbl += de;
    }
  }
  out += grad;
  return value;
}

Vector PolicyModel::backward(const Vector& params, const Prompt& prompt, std::span<const Vector> labels,
                             LossKind kind) const {
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(layout_.size()));
  loss_and_gradient(params, prompt, labels, kind, grad);
  return grad;
}

Vector PolicyModel::act_from_prediction(const Eigen::Ref<const Vector>& last, RngStream& rng) const {
  if (config_.head == HeadKind::SoftmaxOverArms) {
    const double top = last.maxCoeff();
    std::vector<double> w(static_cast<std::size_t>(last.size()));
    for (Eigen::Index i = 0; i < last.size(); ++i) w[static_cast<std::size_t>(i)] = std::exp(last(i) - top);
    return arm_vector(static_cast<int>(rng.categorical(w)));
  }
  return config_.actions.project(last);
}

Vector PolicyModel::act(const Vector& params, const History& history, RngStream& rng) const {
  const Predictions pred = forward(params, build_prompt(history, config_));
  return act_from_prediction(pred.row(pred.rows() - 1).transpose(), rng);
}

std::uint64_t param_digest(const Vector& params) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(params(i));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const ParamLayout layout(ckpt.config);
  if (static_cast<std::size_t>(ckpt.params.size()) != layout.size())
    throw std::invalid_argument("checkpoint parameters do not match the config");
  const std::string header =
      Json{{"model", to_json(ckpt.config)}, {"meta", ckpt.meta}, {"count", layout.size()}}.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, sizeof kMagic);
  put_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (Eigen::Index i = 0; i < ckpt.params.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(ckpt.params(i)));
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("not a checkpoint (bad magic)");
  const std::uint64_t hlen = get_u64(in);
  if (hlen > (1ULL << 30)) throw std::runtime_error("checkpoint header too large");
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("checkpoint truncated in header");
  Checkpoint ck;
  std::uint64_t count = 0;
  try {
    const Json j = Json::parse(header);
    ck.config = model_config_from_json(j.at("model"));
    ck.meta = j.value("meta", Json::object());
    count = j.at("count").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint header: ") + e.what());
  }
  const ParamLayout layout(ck.config);
  if (count != layout.size())
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " parameters but the config needs " +
                             std::to_string(layout.size()));
  ck.params.resize(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i)
    ck.params(static_cast<Eigen::Index>(i)) = std::bit_cast<double>(get_u64(in));
  in.peek();
  if (!in.eof()) throw std::runtime_error("checkpoint has trailing bytes after the parameters");
  return ck;
}

}  // namespace dplab::model
