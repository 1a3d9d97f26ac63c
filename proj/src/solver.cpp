#include "stocpen/solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace stocpen {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct StackedEval {
  Eigen::VectorXd c_value;    // equality values
  Eigen::VectorXd direction;  // grad c_E c_E (+ grad c_I [c_I]_+)
  double norm_sq = 0.0;       // ||c_E||^2 + ||[c_I]_+||^2
};

StackedEval eval_stacked(const SolverProblemView& problem, const Eigen::VectorXd& x) {
  StackedEval out;
  ConstraintEvaluation eq = problem.eval_constraint(x);
  out.direction = eq.jac_t_apply(eq.value);
  out.norm_sq = eq.value.squaredNorm();
  out.c_value = std::move(eq.value);
  if (problem.has_inequality()) {
    const ConstraintEvaluation iq = problem.eval_inequality(x);
    const Eigen::VectorXd plus = iq.value.cwiseMax(0.0);
    out.direction += iq.jac_t_apply(plus);
    out.norm_sq += plus.squaredNorm();
  }
  return out;
}

// Geometric trace thinning: dense for k <= 1000, then ~1% spacing, always
// keeping the final iteration.
struct TraceGrid {
  long long stride;
  long long horizon;
  long long next_mark = 1;

  bool should_record(long long k) {
    if (stride > 0) return k % stride == 0 || k == 1 || k == horizon;
    if (k <= 1000 || k == horizon) {
      next_mark = std::max(next_mark, k + 1);
      return true;
    }
    if (k >= next_mark) {
      next_mark = std::max(k + 1, static_cast<long long>(std::ceil(static_cast<double>(k) * 1.01)));
      return true;
    }
    return false;
  }
};

}  // namespace

const char* to_string(Algorithm a) {
  return a == Algorithm::recursive_momentum ? "alg1" : "alg2";
}

DivergenceError::DivergenceError(long long iteration, Eigen::VectorXd last_finite)
    : std::runtime_error("solver diverged at iteration " + std::to_string(iteration) +
                         ": iterate left the finite range"),
      iteration_(iteration),
      last_finite_(std::move(last_finite)) {}

void RunConfig::validate(const ProblemInstance& problem) const {
  if (iterations < 2) throw std::invalid_argument("RunConfig: iterations must be >= 2");
  if (!(epsilon > 0.0)) throw std::invalid_argument("RunConfig: epsilon must be positive");
  if (trace_stride < 0) throw std::invalid_argument("RunConfig: trace_stride must be >= 0");
  const SmoothnessConstants& c = problem.constants();
  if (algorithm == Algorithm::recursive_momentum && std::isnan(c.avg_smoothness_f))
    throw std::invalid_argument("RunConfig: alg1 requires the average smoothness constant");
  if (algorithm == Algorithm::polyak_momentum && std::isnan(c.smoothness_f))
    throw std::invalid_argument("RunConfig: alg2 requires the smoothness constant");
  if (start && !problem.feasible_set().contains(*start, 1e-9))
    throw std::invalid_argument("RunConfig: start point is not a member of the feasible set");
}

long long select_iterate(long long horizon, SampleContext& ctx) {
  if (horizon < 2) throw std::domain_error("select_iterate: horizon must be >= 2");
  const long long lo = (horizon + 1) / 2 + 1;  // ceil(K/2) + 1
  const long long span = horizon - lo + 1;
  return lo + static_cast<long long>(ctx.uniform_below(static_cast<std::uint64_t>(span)));
}

Eigen::VectorXd combined_direction(const SolverProblemView& problem, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& g, double rho) {
  if (!problem.feasible_set().contains(x, 1e-9))
    throw std::invalid_argument("combined_direction: x is not a member of the feasible set");
  const StackedEval se = eval_stacked(problem, x);
  return g + rho * se.direction;
}

SolverState init_solver(Algorithm algorithm, const SolverProblemView& problem,
                        const Eigen::VectorXd& x1, SampleContext& ctx) {
  if (!problem.feasible_set().contains(x1, 1e-9))
    throw std::invalid_argument("init_solver: start point is not a member of the feasible set");
  SolverState s;
  s.k = 1;
  s.x = x1;
  s.estimator = init_estimator(
      algorithm == Algorithm::recursive_momentum ? EstimatorKind::recursive : EstimatorKind::polyak,
      problem, x1, ctx);
  s.sample_count = 1;
  s.grad_eval_count = 1;
  StackedEval se = eval_stacked(problem, x1);
  s.penalty_direction = std::move(se.direction);
  s.c_value = std::move(se.c_value);
  s.h = 0.5 * se.norm_sq;
  s.stacked_norm = std::sqrt(se.norm_sq);
  s.constraint_eval_count = 1;
  return s;
}

StepReport solver_step(SolverState& state, const SolverProblemView& problem,
                       const ScheduleValues& values, SampleContext& ctx) {
  if (values.k != state.k)
    throw std::invalid_argument("solver_step: schedule values do not match the state index");

  StepReport rep;
  rep.h_before = state.h;
  rep.g_before = state.estimator.g;
  rep.x_before = state.x;

  const Eigen::VectorXd direction = state.estimator.g + values.rho * state.penalty_direction;
  Eigen::VectorXd x_next = problem.feasible_set().project(state.x - values.eta * direction);
  if (!x_next.allFinite()) throw DivergenceError(state.k, state.x);

  update_estimator(state.estimator, problem, x_next, values.alpha, ctx);
  state.sample_count += 1;
  state.grad_eval_count += state.estimator.kind == EstimatorKind::recursive ? 2 : 1;

  StackedEval se = eval_stacked(problem, x_next);
  state.constraint_eval_count += 1;
  state.penalty_direction = std::move(se.direction);
  state.c_value = std::move(se.c_value);
  state.h = 0.5 * se.norm_sq;
  state.stacked_norm = std::sqrt(se.norm_sq);
  state.x = std::move(x_next);
  state.k += 1;

  rep.h_after = state.h;
  rep.x_after = state.x;
  return rep;
}

namespace {

RunRecord run_impl(const ProblemInstance& problem, const RunConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate(problem);

  const SolverProblemView view(problem);
  const SmoothnessConstants& consts = problem.constants();
  const double penalty_smoothness = consts.penalty_smoothness();
  const double gradient_smoothness = config.algorithm == Algorithm::recursive_momentum
                                         ? consts.avg_smoothness_f
                                         : consts.smoothness_f;
  const long long horizon = config.iterations;

  SampleContext est_ctx(config.seed, StreamRole::estimator_samples);
  SampleContext sel_ctx(config.seed, StreamRole::iterate_selection);

  // iota depends only on (seed, K); its stream is independent of the
  // trajectory, so drawing it up front equals drawing it at the end.
  const long long iota = select_iterate(horizon, sel_ctx);

  const Eigen::VectorXd x1 = config.start
                                 ? *config.start
                                 : problem.feasible_set().project(Eigen::VectorXd::Zero(problem.dimension()));
  SolverState state = init_solver(config.algorithm, view, x1, est_ctx);

  RunRecord rec;
  rec.algorithm = config.algorithm;
  rec.seed = config.seed;
  rec.iterations = horizon;
  rec.tallies.max_estimator_norm_excess = state.estimator.g.norm() - consts.lipschitz_f;

  TraceGrid grid{config.trace_stride, horizon};
  const bool have_mean = problem.has_mean_gradient();

  for (long long k = 1; k <= horizon; ++k) {
    const ScheduleValues values = schedule_at(config.schedule, k);
    const StepReport rep = solver_step(state, view, values, est_ctx);

    const double excess = state.estimator.g.norm() - consts.lipschitz_f;
    if (excess > rec.tallies.max_estimator_norm_excess)
      rec.tallies.max_estimator_norm_excess = excess;

    LemmaVerdict verdict = LemmaVerdict::not_applicable;
    if (config.monitors.lemma_monitor) {
      verdict = lemma_monitor_descent(rep.h_before, rep.h_after, values, consts);
      switch (verdict) {
        case LemmaVerdict::holds:
          ++rec.tallies.lemma_holds;
          break;
        case LemmaVerdict::violated:
          ++rec.tallies.lemma_violated;
          break;
        case LemmaVerdict::not_applicable:
          ++rec.tallies.lemma_not_applicable;
          break;
      }
    }

    const bool traced = grid.should_record(k);
    const bool want_resid = traced && config.monitors.exact_residual && have_mean;

    if (traced) {
      TraceRow row;
      row.k = k;
      row.h = rep.h_after;
      row.c_norm = state.stacked_norm;
      row.rho = values.rho;
      row.eta = values.eta;
      row.alpha = values.alpha;
      row.step_cond = step_condition_holds(values, penalty_smoothness);
      row.lemma_verdict = verdict;
      if (want_resid) {
        // Residual at the arrival state with the producing step's penalty
        // weight; the cached direction at x_{k+1} is reused.
        const Eigen::VectorXd v = problem.mean_gradient(state.x) + values.rho * state.penalty_direction;
        row.resid_exact = problem.feasible_set().normal_cone_distance(state.x, v);
        const double a = 1.0 / (values.eta * values.eta) +
                         (gradient_smoothness + values.rho * penalty_smoothness) *
                             (gradient_smoothness + values.rho * penalty_smoothness);
        row.resid_surrogate = 3.0 * a * (rep.x_after - rep.x_before).squaredNorm() +
                              3.0 * (rep.g_before - problem.mean_gradient(rep.x_before)).squaredNorm();
        if (row.resid_exact * row.resid_exact > row.resid_surrogate)
          ++rec.tallies.surrogate_violations;
      } else {
        row.resid_exact = kNaN;
        row.resid_surrogate = kNaN;
      }
      rec.rows.push_back(std::move(row));
    }

    if (state.k == iota) {
      rec.terminal.selected_index = iota;
      rec.terminal.x = state.x;
      rec.terminal.feasibility = state.stacked_norm;
      rec.terminal.rho_prev = values.rho;
      rec.terminal.multiplier = values.rho * state.c_value;
      if (have_mean) {
        const Eigen::VectorXd v = problem.mean_gradient(state.x) + values.rho * state.penalty_direction;
        rec.terminal.stationarity_exact = problem.feasible_set().normal_cone_distance(state.x, v);
      } else {
        rec.terminal.stationarity_exact = kNaN;
      }
    }
  }

  rec.sample_count = state.sample_count;
  rec.grad_eval_count = state.grad_eval_count;
  rec.constraint_eval_count = state.constraint_eval_count;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace

RunRecord run(const ProblemInstance& problem, const RunConfig& config) {
  if (problem.has_inequality())
    throw std::invalid_argument("run: instance has inequality constraints, use run_mixed");
  return run_impl(problem, config);
}

RunRecord run_mixed(const ProblemInstance& problem, const RunConfig& config) {
  return run_impl(problem, config);
}

}  // namespace stocpen
