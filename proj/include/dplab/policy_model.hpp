#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dplab/bayes.hpp"
#include "dplab/core.hpp"
#include "dplab/environments.hpp"
#include "dplab/serialization.hpp"

namespace dplab::model {

using bayes::LossKind;

enum class HeadKind { SoftmaxOverArms, ContinuousVector };

std::string_view head_name(HeadKind h);
HeadKind parse_head(std::string_view name);
std::string_view loss_name(LossKind k);
LossKind parse_loss(std::string_view name);
/// Cross-entropy for arms, squared for pricing, absolute for linear bandits and newsvendor.
LossKind default_loss(Family family);

struct ModelConfig {
  int layers = 2;
  int heads = 2;
  int embed_dim = 32;
  int context_dim = 0;
  int observation_dim = 1;
  ActionSpace actions = ActionSpace::discrete(kDefaultArms);
  int max_prompt_len = 199;  // 2T - 1 for T = 100
  HeadKind head = HeadKind::SoftmaxOverArms;
  double dropout = 0.0;

  /// Width of feature elements (X_tau, o_{tau-1}).
  int feature_dim() const { return context_dim + observation_dim; }
  /// Width of label elements (one-hot arm or raw action vector).
  int label_dim() const { return actions.encoding_dim(); }
  /// Width of the prediction at each feature position.
  int output_dim() const { return actions.encoding_dim(); }
  int head_dim() const { return embed_dim / heads; }
  void validate() const;

  /// Desk-scale config for a prior: head and loss follow the family.
  static ModelConfig for_prior(const PriorSpec& prior, int horizon);
};

Json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j);

/// A named, contiguous block of the flat parameter vector (column-major
/// rows x cols; vectors have cols = 1).
struct Slice {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 1;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& config);

  std::size_t size() const { return size_; }
  const std::vector<Slice>& slices() const { return slices_; }
  const Slice& at(std::string_view name) const;
  /// Slice containing flat index i.
  const Slice& slice_of(std::size_t i) const;
  /// Closed-form count: D(F+1) + D(A+1) + L_max D + layers (12 D^2 + 13 D) + 2D + O(D+1).
  static std::size_t expected_count(const ModelConfig& c);

 private:
  void add(std::string name, int rows, int cols = 1);
  std::vector<Slice> slices_;
  std::size_t size_ = 0;
};

/// Linear maps ~ N(0, 1/fan_in), positional table ~ N(0, 0.02^2),
/// normalization gains 1, all biases 0. Deterministic per seed.
Vector init_params(const ModelConfig& config, std::uint64_t seed);

enum class ElementType : std::uint8_t { Feature, Label };

/// [(X_1, 0), a_1, (X_2, o_1), a_2, ..., (X_t, o_{t-1})]: 2t - 1 elements.
struct Prompt {
  std::vector<ElementType> types;
  std::vector<Vector> values;
  std::size_t size() const { return types.size(); }
  /// Number of feature elements (t).
  std::size_t decisions() const { return (types.size() + 1) / 2; }
};

/// From H_t (steps 1..t-1 plus the pending X_t).
Prompt build_prompt(const History& history, const ModelConfig& config);
/// From the first `t` steps of a labelled trajectory (X_t of step t is the
/// pending context; a_t and o_t of step t are not used).
Prompt build_prompt(std::span<const StepRecord> steps, std::size_t t, const ModelConfig& config);
/// Labels a*_1..a*_t for the feature positions of the prompt above.
std::vector<Vector> prompt_labels(std::span<const StepRecord> steps, std::size_t t);

/// Per-feature-position predictions: rows are positions tau = 1..t, columns
/// are logits (arms) or raw action coordinates.
using Predictions = Matrix;

struct LossValue {
  double mean = 0.0;
  std::vector<double> per_position;
};

/// Mean over positions of -log softmax(z)[a*], |pred - a*|_2^2 or |pred - a*|_1.
/// Throws std::out_of_range for arm labels outside 0..arms-1.
LossValue loss(const Predictions& predictions, std::span<const Vector> labels, LossKind kind);

class PolicyModel {
 public:
  explicit PolicyModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }

  /// Inference forward pass (no dropout). Throws std::length_error when the
  /// prompt exceeds max_prompt_len.
  Predictions forward(const Vector& params, const Prompt& prompt) const;

  /// Loss of one prompt and its exact gradient, accumulated into `grad`
  /// (which must be sized to the layout). When `dropout_rng` is given and
  /// dropout > 0, residual-branch dropout masks are drawn from it.
  double loss_and_gradient(const Vector& params, const Prompt& prompt, std::span<const Vector> labels,
                           LossKind kind, Vector& grad, RngStream* dropout_rng = nullptr) const;

  /// Gradient of one prompt's loss.
  Vector backward(const Vector& params, const Prompt& prompt, std::span<const Vector> labels,
                  LossKind kind) const;

  /// Samples an arm from softmax(last logits), or returns the last
  /// prediction projected onto A.
  Vector act(const Vector& params, const History& history, RngStream& rng) const;
  Vector act_from_prediction(const Eigen::Ref<const Vector>& last, RngStream& rng) const;

 private:
  struct Cache;
  Predictions run(const Vector& params, const Prompt& prompt, Cache* cache, RngStream* dropout_rng) const;

  ModelConfig config_;
  ParamLayout layout_;
};

/// Policy backed by an immutable parameter snapshot.
class TransformerPolicy final : public Policy {
 public:
  TransformerPolicy(std::shared_ptr<const PolicyModel> model, std::shared_ptr<const Vector> params)
      : model_(std::move(model)), params_(std::move(params)) {}
  Vector act(const History& history, RngStream& rng) override {
    return model_->act(*params_, history, rng);
  }
  bool randomized() const override { return model_->config().head == HeadKind::SoftmaxOverArms; }
  const Vector& params() const { return *params_; }

 private:
  std::shared_ptr<const PolicyModel> model_;
  std::shared_ptr<const Vector> params_;
};

/// 64-bit FNV-1a over the little-endian bytes of the parameter vector.
std::uint64_t param_digest(const Vector& params);

struct Checkpoint {
  ModelConfig config;
  Vector params;
  Json meta;  // free-form provenance (resolved config, seed)
};

/// Layout: magic "DPLABCK1", uint64 header length, JSON header
/// {"model": ..., "meta": ..., "count": n}, then n little-endian float64.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws std::runtime_error on a bad magic, a malformed header or a
/// parameter count that disagrees with the config or the file length.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dplab::model
