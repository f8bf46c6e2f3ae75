#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dplab/rng.hpp"

namespace dplab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// The action set A of a task.
///
/// Discrete spaces hold arm indices 0..arms-1, encoded as a length-1 vector.
/// Box spaces are [low, high]^dim; ball spaces are {a : |a|_2 <= radius}.
struct ActionSpace {
  enum class Kind { Discrete, Box, Ball };

  Kind kind = Kind::Box;
  int dim = 1;
  int arms = 0;
  double low = 0.0;
  double high = 0.0;
  double radius = 1.0;

  static ActionSpace discrete(int arms);
  static ActionSpace box(int dim, double low, double high);
  static ActionSpace ball(int dim, double radius = 1.0);

  bool contains(const Vector& a, double tol = 1e-12) const;
  /// Clamps per coordinate for boxes, scales radially for balls, rounds and
  /// clamps for arm indices. Sets *moved when the action changed.
  Vector project(const Vector& a, bool* moved = nullptr) const;
  Vector midpoint() const;
  /// Width of the vector used to encode an action for the sequence model.
  int encoding_dim() const { return kind == Kind::Discrete ? arms : dim; }
};

/// One completed interaction (X_t, a_t, o_t) plus the label a*_t when known.
struct StepRecord {
  Vector context;
  Vector action;
  Vector observation;
  std::optional<Vector> optimal_action;
};

/// H_t: t-1 completed steps and the pending context X_t.
class History {
 public:
  History() = default;

  const std::vector<StepRecord>& steps() const { return steps_; }
  const Vector& pending_context() const { return pending_; }
  bool has_pending() const { return has_pending_; }
  /// Index t of the pending decision (1-based).
  std::size_t t() const { return steps_.size() + 1; }

  void reveal(Vector context);
  /// Completes the pending step. Labels are never stored in a History
  /// handed to a policy; see Trajectory for labelled records.
  void append(Vector action, Vector observation);

 private:
  std::vector<StepRecord> steps_;
  Vector pending_;
  bool has_pending_ = false;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  int projections = 0;
};

/// Decision function H_t -> a_t.
///
/// Implementations may keep state derived from the history they have seen,
/// but the only input to act() is the history itself (plus randomness).
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Vector act(const History& history, RngStream& rng) = 0;
  virtual bool randomized() const { return false; }
};

/// Converts an arm index vector to its integer index.
inline int arm_of(const Vector& a) { return static_cast<int>(a(0)); }
inline Vector arm_vector(int arm) { return Vector::Constant(1, static_cast<double>(arm)); }

}  // namespace dplab
