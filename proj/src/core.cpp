#include "dplab/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dplab {

ActionSpace ActionSpace::discrete(int arms) {
  if (arms < 1) throw std::invalid_argument("discrete action space needs at least one arm");
  ActionSpace s;
  s.kind = Kind::Discrete;
  s.dim = 1;
  s.arms = arms;
  s.low = 0.0;
  s.high = arms - 1;
  return s;
}

ActionSpace ActionSpace::box(int dim, double low, double high) {
  if (dim < 1 || !(low <= high)) throw std::invalid_argument("invalid box action space");
  ActionSpace s;
  s.kind = Kind::Box;
  s.dim = dim;
  s.low = low;
  s.high = high;
  return s;
}

ActionSpace ActionSpace::ball(int dim, double radius) {
  if (dim < 1 || !(radius > 0.0)) throw std::invalid_argument("invalid ball action space");
  ActionSpace s;
  s.kind = Kind::Ball;
  s.dim = dim;
  s.radius = radius;
  return s;
}

bool ActionSpace::contains(const Vector& a, double tol) const {
  if (a.size() != dim) return false;
  if (!a.allFinite()) return false;
  switch (kind) {
    case Kind::Discrete:
      return a(0) == std::round(a(0)) && a(0) >= 0 && a(0) < arms;
    case Kind::Box:
      return (a.array() >= low - tol).all() && (a.array() <= high + tol).all();
    case Kind::Ball:
      return a.norm() <= radius * (1.0 + tol);
  }
  return false;
}

Vector ActionSpace::project(const Vector& a, bool* moved) const {
  if (moved) *moved = false;
  if (a.size() != dim) throw std::invalid_argument("action dimension mismatch");
  Vector out = a;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out(i))) out(i) = 0.0;
  }
  switch (kind) {
    case Kind::Discrete:
      out(0) = std::clamp(std::round(out(0)), 0.0, static_cast<double>(arms - 1));
      break;
    case Kind::Box:
      out = out.cwiseMax(low).cwiseMin(high);
      break;
    case Kind::Ball: {
      const double n = out.norm();
      if (n > radius) out *= radius / n;
      break;
    }
  }
  // Rounding-level excursions (e.g. a normalized vector with norm 1 + 1ulp)
  // are corrected but not counted as projections.
  if (moved) *moved = !contains(a);
  return out;
}

Vector ActionSpace::midpoint() const {
  switch (kind) {
    case Kind::Discrete:
      return arm_vector(0);
    case Kind::Box:
      return Vector::Constant(dim, 0.5 * (low + high));
    case Kind::Ball:
      return Vector::Zero(dim);
  }
  return Vector::Zero(dim);
}

void History::reveal(Vector context) {
  if (has_pending_) throw std::logic_error("history already has a pending context");
  pending_ = std::move(context);
  has_pending_ = true;
}

void History::append(Vector action, Vector observation) {
  if (!has_pending_) throw std::logic_error("no pending context to complete");
  steps_.push_back(StepRecord{std::move(pending_), std::move(action), std::move(observation), std::nullopt});
  pending_ = Vector();
  has_pending_ = false;
}

}  // namespace dplab
