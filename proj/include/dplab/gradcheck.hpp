#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dplab/policy_model.hpp"

namespace dplab::model {

struct GradCheckResult {
  std::string name;          // "<head>+<loss>"
  double max_rel_error = 0.0;
  std::string worst_slice;   // slice holding the worst coordinate
  std::size_t worst_index = 0;
  int coords = 0;            // coordinates compared
};

/// `coords` distinct indices in 0..n-1 (partial Fisher-Yates).
std::vector<std::size_t> sample_coordinates(std::size_t n, int coords, RngStream rng);

/// Relative error |g - fd| / max(|g| + |fd|, 1e-5) against central finite
/// differences with step 1e-5 at the given coordinates. The floor keeps
/// coordinates whose true gradient is zero (the key bias, for instance) from
/// being scored on rounding noise alone.
GradCheckResult gradient_check(const PolicyModel& model, const Vector& params, const Prompt& prompt,
                               std::span<const Vector> labels, LossKind kind, const Vector& gradient,
                               std::span<const std::size_t> coordinates);

/// The three head/loss pairings on a 1-layer, 1-head, embed-8 model over a
/// 6-step prompt: softmax+cross-entropy (4-arm bandit), continuous+squared and
/// continuous+absolute (linear bandit). `corrupt` is added to one analytic
/// checked gradient coordinate per pairing, as a negative control.
std::vector<GradCheckResult> gradient_check_suite(int coords, std::uint64_t seed, double corrupt = 0.0);

}  // namespace dplab::model
