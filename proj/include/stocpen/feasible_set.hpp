#pragma once

#include <Eigen/Core>

#include "stocpen/rng.hpp"

namespace stocpen {

enum class SetKind { whole_space, box, euclidean_ball };

/// Simple closed convex sets with exact Euclidean projection: all of R^n,
/// coordinate boxes (infinite bounds allowed per coordinate), and balls.
class FeasibleSet {
 public:
  static FeasibleSet whole_space(Eigen::Index dim);
  static FeasibleSet box(Eigen::VectorXd lower, Eigen::VectorXd upper);
  static FeasibleSet ball(Eigen::VectorXd center, double radius);

  SetKind kind() const { return kind_; }
  Eigen::Index dimension() const { return dim_; }

  Eigen::VectorXd project(const Eigen::VectorXd& v) const;
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;

  /// dist(0, v + N_X(x)) for a member x. Whole space: ||v||. Box: Euclidean
  /// norm of per-coordinate residuals, where a bound can absorb the part of
  /// v_i pointing out of the set. Ball: ||v|| in the interior; on the
  /// boundary the outward-radial cone absorbs the inward-radial part of v.
  double normal_cone_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const;

  /// Uniform random member. Unbounded sets (and unbounded box coordinates)
  /// are sampled within radius region_radius of the origin.
  Eigen::VectorXd sample_member(SampleContext& ctx, double region_radius) const;

  const Eigen::VectorXd& lower() const;   // box only
  const Eigen::VectorXd& upper() const;   // box only
  const Eigen::VectorXd& center() const;  // ball only
  double radius() const;                  // ball only

 private:
  FeasibleSet(SetKind kind, Eigen::Index dim) : kind_(kind), dim_(dim) {}

  void require_dim(const Eigen::VectorXd& v, const char* what) const;

  SetKind kind_;
  Eigen::Index dim_;
  Eigen::VectorXd lower_, upper_;  // box
  Eigen::VectorXd center_;         // ball
  double radius_ = 0.0;            // ball
};

}  // namespace stocpen
