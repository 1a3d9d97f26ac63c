#include "stocpen/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "stocpen/solver.hpp"

namespace stocpen {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

const char* to_string(LemmaVerdict v) {
  switch (v) {
    case LemmaVerdict::holds:
      return "holds";
    case LemmaVerdict::violated:
      return "violated";
    case LemmaVerdict::not_applicable:
      return "na";
  }
  return "?";
}

ConstraintResidual constraint_residual(const ProblemInstance& problem, const Eigen::VectorXd& x) {
  ConstraintResidual out;
  const ConstraintEvaluation eq = problem.eval_constraint(x);
  out.direction = eq.jac_t_apply(eq.value);
  double sq = eq.value.squaredNorm();
  if (problem.has_inequality()) {
    const ConstraintEvaluation iq = problem.eval_inequality(x);
    const Eigen::VectorXd plus = iq.value.cwiseMax(0.0);
    out.direction += iq.jac_t_apply(plus);
    sq += plus.squaredNorm();
  }
  out.stacked_norm = std::sqrt(sq);
  out.h = 0.5 * sq;
  return out;
}

StationarityReport stationarity_report(const ProblemInstance& problem, long long k,
                                       const Eigen::VectorXd& x, const Eigen::VectorXd& x_next,
                                       const Eigen::VectorXd& g, const ScheduleValues& values,
                                       double gradient_smoothness) {
  StationarityReport r;
  r.k = k;
  const ConstraintResidual cr = constraint_residual(problem, x_next);
  r.feasibility = cr.stacked_norm;
  if (problem.has_mean_gradient()) {
    const Eigen::VectorXd v = problem.mean_gradient(x_next) + values.rho * cr.direction;
    r.exact_residual = problem.feasible_set().normal_cone_distance(x_next, v);
    const double L = problem.constants().penalty_smoothness();
    const double a = 1.0 / (values.eta * values.eta) +
                     (gradient_smoothness + values.rho * L) * (gradient_smoothness + values.rho * L);
    r.surrogate_bound = 3.0 * a * (x_next - x).squaredNorm() +
                        3.0 * (g - problem.mean_gradient(x)).squaredNorm();
  } else {
    r.exact_residual = kNaN;
    r.surrogate_bound = kNaN;
  }
  return r;
}

LemmaVerdict lemma_monitor_descent(double h_before, double h_after, const ScheduleValues& values,
                                   const SmoothnessConstants& consts) {
  if (!step_condition_holds(values, consts.penalty_smoothness())) return LemmaVerdict::not_applicable;
  const double theta = consts.error_bound_theta;
  const double gamma = consts.error_bound_gamma;
  const double lhs = h_after + std::pow(2.0, theta - 2.0) * gamma * gamma * values.rho * values.eta *
                                   std::pow(h_after, theta);
  const double rhs =
      h_before + consts.lipschitz_f * consts.lipschitz_f * values.eta / (2.0 * values.rho);
  return lhs <= rhs ? LemmaVerdict::holds : LemmaVerdict::violated;
}

VarianceCheckResult variance_replicate_check(const ProblemInstance& problem, EstimatorKind kind,
                                             const Eigen::VectorXd& x_from,
                                             const Eigen::VectorXd& x_to, double g_spread,
                                             double alpha, int replicates, SampleContext& ctx) {
  if (replicates < 2000)
    throw std::invalid_argument("variance_replicate_check: needs at least 2000 replicates");
  if (!(alpha > 0.0) || alpha > 1.0)
    throw std::invalid_argument("variance_replicate_check: alpha must lie in (0, 1]");
  if (!problem.has_mean_gradient())
    throw std::invalid_argument("variance_replicate_check: requires a synthetic instance");

  const SmoothnessConstants& c = problem.constants();
  const double radius = c.lipschitz_f;
  const Eigen::VectorXd grad_from = problem.mean_gradient(x_from);
  const Eigen::VectorXd grad_to = problem.mean_gradient(x_to);
  const double step_sq = (x_to - x_from).squaredNorm();

  const double coef = kind == EstimatorKind::recursive ? (1.0 - alpha) * (1.0 - alpha) : (1.0 - alpha);
  double bound_extra;
  if (kind == EstimatorKind::recursive) {
    bound_extra = 6.0 * c.avg_smoothness_f * c.avg_smoothness_f * step_sq +
                  3.0 * c.noise_sigma * c.noise_sigma * alpha * alpha;
  } else {
    bound_extra = c.smoothness_f * c.smoothness_f / alpha * step_sq +
                  c.noise_sigma * c.noise_sigma * alpha * alpha;
  }

  double sum_to = 0.0, sum_from = 0.0, sum_d = 0.0, sum_d2 = 0.0;
  for (int r = 0; r < replicates; ++r) {
    const Eigen::VectorXd g =
        truncate_ball(grad_from + g_spread * ctx.normal_vector(x_from.size()), radius);
    Eigen::VectorXd g_next;
    if (kind == EstimatorKind::recursive) {
      const auto [s_to, s_from] = problem.sample_gradient_pair(x_to, x_from, ctx);
      g_next = truncate_ball(s_to + (1.0 - alpha) * (g - s_from), radius);
    } else {
      const Eigen::VectorXd s_to = problem.sample_gradient(x_to, ctx);
      g_next = truncate_ball((1.0 - alpha) * g + alpha * s_to, radius);
    }
    const double e_from = (g - grad_from).squaredNorm();
    const double e_to = (g_next - grad_to).squaredNorm();
    const double d = e_to - coef * e_from;
    sum_to += e_to;
    sum_from += e_from;
    sum_d += d;
    sum_d2 += d * d;
  }

  const double n = static_cast<double>(replicates);
  const double mean_d = sum_d / n;
  const double var_d = std::max(0.0, (sum_d2 - n * mean_d * mean_d) / (n - 1.0));
  VarianceCheckResult out;
  out.replicates = replicates;
  out.lhs_mean = sum_to / n;
  out.rhs_bound = coef * (sum_from / n) + bound_extra;
  out.stderr_diff = std::sqrt(var_d / n);
  out.holds = mean_d <= bound_extra + 3.0 * out.stderr_diff;
  return out;
}

RateFit fit_loglog(const std::vector<double>& k, const std::vector<double>& q, double k_min,
                   double k_max) {
  if (k.size() != q.size()) throw std::invalid_argument("fit_loglog: size mismatch");
  std::vector<double> xs, ys;
  bool truncated = false;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (k[i] < k_min || k[i] > k_max) continue;
    if (!(q[i] > 0.0)) {
      truncated = true;
      break;  // positive prefix only
    }
    xs.push_back(std::log(k[i]));
    ys.push_back(std::log(q[i]));
  }
  if (xs.size() < 2) throw std::invalid_argument("fit_loglog: fewer than 2 usable points in window");

  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_loglog: degenerate window (single k)");

  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  fit.k_min = k_min;
  fit.k_max = k_max;
  fit.points = static_cast<long long>(xs.size());
  fit.truncated_at_nonpositive = truncated;
  return fit;
}

RateFit fit_rate(const RunRecord& record, TraceQuantity quantity, double k_min, double k_max) {
  std::vector<double> ks, qs;
  ks.reserve(record.rows.size());
  qs.reserve(record.rows.size());
  for (const TraceRow& row : record.rows) {
    double v = kNaN;
    switch (quantity) {
      case TraceQuantity::feasibility_sq:
        v = row.c_norm * row.c_norm;
        break;
      case TraceQuantity::exact_residual_sq:
        v = row.resid_exact * row.resid_exact;
        break;
      case TraceQuantity::surrogate:
        v = row.resid_surrogate;
        break;
    }
    if (std::isnan(v)) continue;
    ks.push_back(static_cast<double>(row.k));
    qs.push_back(v);
  }
  long long in_window = 0;
  for (double kk : ks)
    if (kk >= k_min && kk <= k_max) ++in_window;
  if (in_window < 30)
    throw std::invalid_argument("fit_rate: needs at least 30 trace rows in the fit window");
  return fit_loglog(ks, qs, k_min, k_max);
}

FalsifierReport error_bound_falsifier(const ProblemInstance& problem, long long samples,
                                      SampleContext& ctx) {
  FalsifierReport rep;
  rep.gamma = problem.constants().error_bound_gamma;
  rep.theta = problem.constants().error_bound_theta;
  rep.min_ratio = std::numeric_limits<double>::infinity();
  const FeasibleSet& set = problem.feasible_set();
  for (long long s = 0; s < samples; ++s) {
    const Eigen::VectorXd x = set.sample_member(ctx, problem.region_radius());
    const ConstraintResidual cr = constraint_residual(problem, x);
    if (cr.stacked_norm < 1e-12) {
      ++rep.skipped_near_feasible;
      continue;
    }
    const double ratio = set.normal_cone_distance(x, cr.direction) /
                         std::pow(cr.stacked_norm, problem.constants().error_bound_theta);
    ++rep.samples_used;
    if (ratio < rep.min_ratio) {
      rep.min_ratio = ratio;
      rep.argmin = x;
    }
  }
  rep.flagged = rep.samples_used > 0 && rep.min_ratio < rep.gamma * (1.0 - 1e-9);
  return rep;
}

}  // namespace stocpen
