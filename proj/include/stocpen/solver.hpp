#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stocpen/diagnostics.hpp"
#include "stocpen/estimator.hpp"
#include "stocpen/problem.hpp"
#include "stocpen/schedules.hpp"

namespace stocpen {

enum class Algorithm { recursive_momentum, polyak_momentum };

const char* to_string(Algorithm a);

/// Raised when an iterate leaves the finite range; carries the last finite
/// state as evidence.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long long iteration, Eigen::VectorXd last_finite);
  long long iteration() const { return iteration_; }
  const Eigen::VectorXd& last_finite_iterate() const { return last_finite_; }

 private:
  long long iteration_;
  Eigen::VectorXd last_finite_;
};

struct MonitorToggles {
  bool exact_residual = true;  // evaluate the mean-gradient residual at traced rows
  bool lemma_monitor = true;   // per-iteration descent inequality
};

struct RunConfig {
  Algorithm algorithm = Algorithm::recursive_momentum;
  ScheduleFamily schedule;
  long long iterations = 0;  // K >= 2
  double epsilon = 1e-2;     // target tolerance, reporting only
  std::uint64_t seed = 0;
  long long trace_stride = 0;  // 0 = dense to 10^3, then ~1% geometric spacing
  MonitorToggles monitors;
  std::optional<Eigen::VectorXd> start;  // default: project(0)

  void validate(const ProblemInstance& problem) const;
};

/// One trace row describes iteration k and its arrival state x_{k+1}:
/// h and c_norm are evaluated at x_{k+1}, the residuals pair x_{k+1} with
/// the penalty weight rho_k, and (rho, eta, alpha) are the step-k values.
struct TraceRow {
  long long k = 0;
  double h = 0.0;
  double c_norm = 0.0;
  double resid_exact = 0.0;      // NaN when not computed
  double resid_surrogate = 0.0;  // NaN when not computed
  double rho = 0.0, eta = 0.0, alpha = 0.0;
  bool step_cond = false;
  LemmaVerdict lemma_verdict = LemmaVerdict::not_applicable;
};

struct MonitorTallies {
  long long lemma_holds = 0;
  long long lemma_violated = 0;
  long long lemma_not_applicable = 0;
  long long surrogate_violations = 0;     // exact^2 > surrogate at a traced row
  double max_estimator_norm_excess = 0.0;  // max over k of ||g_k|| - L_f
};

struct TerminalCertificate {
  long long selected_index = 0;  // iota, uniform on {ceil(K/2)+1, ..., K}
  Eigen::VectorXd x;             // x_iota
  double feasibility = 0.0;      // ||(c_E, [c_I]_+)(x_iota)||
  Eigen::VectorXd multiplier;    // rho_{iota-1} c_E(x_iota)
  double rho_prev = 0.0;         // rho_{iota-1}
  double stationarity_exact = 0.0;  // residual at x_iota; NaN if unavailable
};

struct RunRecord {
  Algorithm algorithm = Algorithm::recursive_momentum;
  std::uint64_t seed = 0;
  long long iterations = 0;
  std::vector<TraceRow> rows;
  TerminalCertificate terminal;
  long long sample_count = 0;
  long long grad_eval_count = 0;
  long long constraint_eval_count = 0;
  MonitorTallies tallies;
  double wall_seconds = 0.0;  // never serialized into trace files
};

/// iota_K, uniform on {ceil(K/2)+1, ..., K}; requires K >= 2.
long long select_iterate(long long horizon, SampleContext& ctx);

/// G = g + rho grad c(x) c(x), one constraint evaluation.
Eigen::VectorXd combined_direction(const SolverProblemView& problem, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& g, double rho);

/// Incremental solver state for step-level tests. The current constraint
/// evaluation is cached so each step costs exactly one fresh evaluation.
struct SolverState {
  long long k = 1;
  Eigen::VectorXd x;
  EstimatorState estimator;
  Eigen::VectorXd penalty_direction;  // grad c_E c_E (+ grad c_I [c_I]_+) at x
  Eigen::VectorXd c_value;            // equality constraint values at x
  double h = 0.0;                     // stacked h at x
  double stacked_norm = 0.0;          // ||(c_E, [c_I]_+)(x)||
  long long sample_count = 0;
  long long grad_eval_count = 0;
  long long constraint_eval_count = 0;
};

struct StepReport {
  double h_before = 0.0, h_after = 0.0;
  Eigen::VectorXd g_before;  // estimate used to form the step
  Eigen::VectorXd x_before, x_after;
};

SolverState init_solver(Algorithm algorithm, const SolverProblemView& problem,
                        const Eigen::VectorXd& x1, SampleContext& ctx);

StepReport solver_step(SolverState& state, const SolverProblemView& problem,
                       const ScheduleValues& values, SampleContext& ctx);

/// Runs K iterations from the configured start. Requires an equality-only
/// instance; use run_mixed for instances with inequality constraints.
RunRecord run(const ProblemInstance& problem, const RunConfig& config);

/// Same loop with the stacked direction and feasibility measure; reduces
/// bitwise to run when the instance has no inequality constraints.
RunRecord run_mixed(const ProblemInstance& problem, const RunConfig& config);

}  // namespace stocpen
