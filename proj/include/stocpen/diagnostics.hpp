#pragma once

#include <vector>

#include <Eigen/Core>

#include "stocpen/estimator.hpp"
#include "stocpen/problem.hpp"
#include "stocpen/schedules.hpp"

namespace stocpen {

struct RunRecord;  // solver.hpp

/// Verdict of the per-iteration descent monitor. The inequality is only
/// claimed under the step condition, so a failing gate is not a violation.
enum class LemmaVerdict { holds, violated, not_applicable };

const char* to_string(LemmaVerdict v);

/// Stacked constraint residual at x: the direction grad c_E(x) c_E(x)
/// (+ grad c_I(x) [c_I(x)]_+ when inequalities are present), the stacked
/// violation norm ||(c_E, [c_I]_+)||, and h = stacked_norm^2 / 2.
struct ConstraintResidual {
  Eigen::VectorXd direction;
  double stacked_norm = 0.0;
  double h = 0.0;
};

ConstraintResidual constraint_residual(const ProblemInstance& problem, const Eigen::VectorXd& x);

/// Certificate quantities for the arrival state of one step, aligned as in
/// the convergence statements: the residual lives at x_next and uses the
/// penalty weight of the step that produced it.
struct StationarityReport {
  long long k = 0;
  double feasibility = 0.0;      // ||(c_E, [c_I]_+)(x_next)||
  double exact_residual = 0.0;   // dist(0, grad f + rho grad c c + N_X) at x_next; NaN if unavailable
  double surrogate_bound = 0.0;  // computable bound on exact_residual^2
};

/// gradient_smoothness is the smoothness constant of the algorithm in use
/// (average smoothness for the recursive estimator, plain smoothness for
/// Polyak). g is the estimate held while stepping from x to x_next.
StationarityReport stationarity_report(const ProblemInstance& problem, long long k,
                                       const Eigen::VectorXd& x, const Eigen::VectorXd& x_next,
                                       const Eigen::VectorXd& g, const ScheduleValues& values,
                                       double gradient_smoothness);

/// Checks h(x_{k+1}) + 2^{theta-2} gamma^2 rho eta h(x_{k+1})^theta
///        <= h(x_k) + L_f^2 eta / (2 rho)
/// gated on the step condition. Never throws; violated verdicts are data.
LemmaVerdict lemma_monitor_descent(double h_before, double h_after, const ScheduleValues& values,
                                   const SmoothnessConstants& consts);

/// Monte-Carlo check of the one-step variance recursion at a fixed state
/// configuration. g is drawn as truncate(mean gradient + g_spread * z) per
/// replicate; the verdict holds when the empirical left side stays below
/// the recursion bound within three standard errors.
struct VarianceCheckResult {
  double lhs_mean = 0.0;       // E ||g_next - grad f(x_to)||^2
  double rhs_bound = 0.0;      // recursion bound evaluated with empirical g error
  double stderr_diff = 0.0;    // standard error of the paired difference
  int replicates = 0;
  bool holds = false;
};

VarianceCheckResult variance_replicate_check(const ProblemInstance& problem, EstimatorKind kind,
                                             const Eigen::VectorXd& x_from,
                                             const Eigen::VectorXd& x_to, double g_spread,
                                             double alpha, int replicates, SampleContext& ctx);

/// Ordinary least squares of log(q) on log(k).
struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double k_min = 0.0, k_max = 0.0;
  long long points = 0;
  bool truncated_at_nonpositive = false;  // fit used the positive prefix only
};

RateFit fit_loglog(const std::vector<double>& k, const std::vector<double>& q, double k_min,
                   double k_max);

enum class TraceQuantity { feasibility_sq, exact_residual_sq, surrogate };

RateFit fit_rate(const RunRecord& record, TraceQuantity quantity, double k_min, double k_max);

/// Random search for violations of the certified error bound
/// dist(0, grad c c + N_X) >= gamma ||c||^theta over members of X.
struct FalsifierReport {
  double min_ratio = 0.0;
  Eigen::VectorXd argmin;
  long long samples_used = 0;
  long long skipped_near_feasible = 0;
  double gamma = 0.0;
  double theta = 0.0;
  bool flagged = false;
};

FalsifierReport error_bound_falsifier(const ProblemInstance& problem, long long samples,
                                      SampleContext& ctx);

}  // namespace stocpen
