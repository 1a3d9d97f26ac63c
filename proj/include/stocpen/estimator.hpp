#pragma once

#include <Eigen/Core>

#include "stocpen/problem.hpp"
#include "stocpen/rng.hpp"

namespace stocpen {

enum class EstimatorKind { recursive, polyak };

/// Truncated momentum gradient estimator state. The estimate g is kept
/// inside the ball of radius truncation_radius after every update; the
/// recursive kind caches the previous iterate so the two-point evaluation
/// with a shared sample stays a local contract.
struct EstimatorState {
  EstimatorKind kind = EstimatorKind::recursive;
  Eigen::VectorXd g;
  double truncation_radius = 0.0;
  Eigen::VectorXd last_x;
  bool radius_warning_issued = false;
};

/// Projection onto the centered Euclidean ball. Boundary points are fixed;
/// the output norm never exceeds radius (enforced against rounding).
Eigen::VectorXd truncate_ball(const Eigen::VectorXd& v, double radius);

/// g_1 = truncate(sample gradient at x1). One sample, one evaluation.
EstimatorState init_estimator(EstimatorKind kind, const SolverProblemView& problem,
                              const Eigen::VectorXd& x1, SampleContext& ctx);

/// Recursive-momentum update: one fresh sample evaluated at both x_next and
/// the cached iterate (x_next first), correction weighted by (1 - alpha).
/// One sample, two gradient evaluations.
void update_recursive(EstimatorState& state, const SolverProblemView& problem,
                      const Eigen::VectorXd& x_next, double alpha, SampleContext& ctx);

/// Polyak-momentum update: convex combination of the running estimate and a
/// fresh sample at x_next. One sample, one gradient evaluation.
void update_polyak(EstimatorState& state, const SolverProblemView& problem,
                   const Eigen::VectorXd& x_next, double alpha, SampleContext& ctx);

/// Dispatch on state.kind.
void update_estimator(EstimatorState& state, const SolverProblemView& problem,
                      const Eigen::VectorXd& x_next, double alpha, SampleContext& ctx);

}  // namespace stocpen
