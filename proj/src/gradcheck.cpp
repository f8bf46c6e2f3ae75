#include "dplab/gradcheck.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dplab/pretrain_data.hpp"

namespace dplab::model {

std::vector<std::size_t> sample_coordinates(std::size_t n, int coords, RngStream rng) {
  if (coords < 1 || static_cast<std::size_t>(coords) > n)
    throw std::invalid_argument("coordinate count must be in 1.." + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < static_cast<std::size_t>(coords); ++i)
    std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
  idx.resize(static_cast<std::size_t>(coords));
  return idx;
}

GradCheckResult gradient_check(const PolicyModel& model, const Vector& params, const Prompt& prompt,
                               std::span<const Vector> labels, LossKind kind, const Vector& gradient,
                               std::span<const std::size_t> coordinates) {
  constexpr double h = 1e-5;
  GradCheckResult out;
  out.name = std::string(head_name(model.config().head)) + "+" + std::string(loss_name(kind));
  out.coords = static_cast<int>(coordinates.size());
  Vector probe = params;
  for (std::size_t c = 0; c < coordinates.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(coordinates[c]);
    probe(i) = params(i) + h;
    const double up = loss(model.forward(probe, prompt), labels, kind).mean;
    probe(i) = params(i) - h;
    const double down = loss(model.forward(probe, prompt), labels, kind).mean;
    probe(i) = params(i);
    const double fd = (up - down) / (2.0 * h);
    const double rel = std::abs(gradient(i) - fd) / std::max(std::abs(gradient(i)) + std::abs(fd), 1e-5);
    if (rel > out.max_rel_error || c == 0) {
      out.max_rel_error = rel;
      out.worst_index = static_cast<std::size_t>(i);
      out.worst_slice = model.layout().slice_of(static_cast<std::size_t>(i)).name;
    }
  }
  return out;
}

std::vector<GradCheckResult> gradient_check_suite(int coords, std::uint64_t seed, double corrupt) {
  constexpr int kSteps = 6;
  struct Pairing {
    Family family;
    int dim;
    LossKind loss;
  };
  const Pairing pairings[] = {{Family::Mab, 4, LossKind::CrossEntropy},
                              {Family::LinearBandit, 0, LossKind::Squared},
                              {Family::LinearBandit, 0, LossKind::Absolute}};
  const RngStream root = RngStream(seed).derive("gradcheck");
  std::vector<GradCheckResult> results;
  for (std::size_t p = 0; p < std::size(pairings); ++p) {
    PriorSpec prior;
    prior.family = pairings[p].family;
    prior.dim = pairings[p].dim;
    ModelConfig cfg = ModelConfig::for_prior(prior, kSteps);
    cfg.layers = 1;
    cfg.heads = 1;
    cfg.embed_dim = 8;
    const PolicyModel model(cfg);
    const RngStream stream = root.derive("pairing", p);
    const Vector params = init_params(cfg, stream.derive("init").key());
    const auto seq = data::generate_sequence(prior, data::noisy_optimal_factory(), kSteps, stream.derive("data"));
    const Prompt prompt = build_prompt(seq.trajectory.steps, kSteps, cfg);
    const auto labels = prompt_labels(seq.trajectory.steps, kSteps);
    Vector grad = model.backward(params, prompt, labels, pairings[p].loss);
    const auto coordinates = sample_coordinates(static_cast<std::size_t>(params.size()), coords, stream.derive("coords"));
    if (corrupt != 0.0) grad(static_cast<Eigen::Index>(coordinates.front())) += corrupt;
    results.push_back(gradient_check(model, params, prompt, labels, pairings[p].loss, grad, coordinates));
  }
  return results;
}

}  // namespace dplab::model
