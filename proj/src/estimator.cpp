#include "stocpen/estimator.hpp"

#include <iostream>
#include <stdexcept>

#include "stocpen/fault.hpp"

namespace stocpen {

namespace {

double effective_radius(const SolverProblemView& problem) {
  return problem.constants().lipschitz_f * fault::trunc_scale();
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw std::invalid_argument("estimator update: alpha must lie in (0, 1]");
}

void check_member(const SolverProblemView& problem, const Eigen::VectorXd& x, const char* what) {
  if (!problem.feasible_set().contains(x, 1e-9))
    throw std::invalid_argument(std::string(what) + ": point is not a member of the feasible set");
}

// A raw sample larger than L_f + 6 sigma cannot occur under correctly
// certified constants; the run proceeds (truncation binds) but we say so.
void warn_if_radius_misspecified(EstimatorState& state, const SolverProblemView& problem,
                                 double raw_norm) {
  if (state.radius_warning_issued) return;
  const SmoothnessConstants& c = problem.constants();
  if (raw_norm > c.lipschitz_f + 6.0 * c.noise_sigma + 1e-9) {
    std::cerr << "stocpen: warning: sampled gradient norm " << raw_norm
              << " exceeds the declared bound L_f=" << c.lipschitz_f
              << " plus the noise cap; truncation will bind more often\n";
    state.radius_warning_issued = true;
  }
}

}  // namespace

Eigen::VectorXd truncate_ball(const Eigen::VectorXd& v, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("truncate_ball: radius must be positive");
  const double nrm = v.norm();
  if (nrm <= radius) return v;
  Eigen::VectorXd out = v * (radius / nrm);
  // Rounding can leave the norm a few ulp above the radius; rescale until
  // the postcondition ||out|| <= radius holds exactly.
  for (int i = 0; i < 4 && out.norm() > radius; ++i) out *= radius / out.norm();
  return out;
}

EstimatorState init_estimator(EstimatorKind kind, const SolverProblemView& problem,
                              const Eigen::VectorXd& x1, SampleContext& ctx) {
  check_member(problem, x1, "init_estimator");
  EstimatorState s;
  s.kind = kind;
  s.truncation_radius = effective_radius(problem);
  const Eigen::VectorXd raw = problem.sample_gradient(x1, ctx);
  warn_if_radius_misspecified(s, problem, raw.norm());
  s.g = truncate_ball(raw, s.truncation_radius);
  s.last_x = x1;
  return s;
}

void update_recursive(EstimatorState& state, const SolverProblemView& problem,
                      const Eigen::VectorXd& x_next, double alpha, SampleContext& ctx) {
  check_alpha(alpha);
  check_member(problem, x_next, "update_recursive");
  if (state.kind != EstimatorKind::recursive)
    throw std::invalid_argument("update_recursive: estimator kind mismatch");
  const auto [grad_next, grad_last] = problem.sample_gradient_pair(x_next, state.last_x, ctx);
  warn_if_radius_misspecified(state, problem, grad_next.norm());
  state.g = truncate_ball(grad_next + (1.0 - alpha) * (state.g - grad_last), state.truncation_radius);
  state.last_x = x_next;
}

void update_polyak(EstimatorState& state, const SolverProblemView& problem,
                   const Eigen::VectorXd& x_next, double alpha, SampleContext& ctx) {
  check_alpha(alpha);
  check_member(problem, x_next, "update_polyak");
  if (state.kind != EstimatorKind::polyak)
    throw std::invalid_argument("update_polyak: estimator kind mismatch");
  const Eigen::VectorXd grad_next = problem.sample_gradient(x_next, ctx);
  warn_if_radius_misspecified(state, problem, grad_next.norm());
  state.g = truncate_ball((1.0 - alpha) * state.g + alpha * grad_next, state.truncation_radius);
  state.last_x = x_next;
}

void update_estimator(EstimatorState& state, const SolverProblemView& problem,
                      const Eigen::VectorXd& x_next, double alpha, SampleContext& ctx) {
  if (state.kind == EstimatorKind::recursive)
    update_recursive(state, problem, x_next, alpha, ctx);
  else
    update_polyak(state, problem, x_next, alpha, ctx);
}

}  // namespace stocpen
