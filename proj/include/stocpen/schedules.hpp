#pragma once

#include "stocpen/problem.hpp"

namespace stocpen {

/// The three published parameter-schedule families.
///   alg1_general     : rho_k = k^nu, eta_k = k^-nu / (4 log(k+2)),
///                      alpha_k = k^-2nu, nu = min{theta_hat/(theta_hat+2), 1/2}.
///   alg2_subquadratic: rho_k = k^(theta/4), eta_k = k^-1/2 / log(k+2),
///                      alpha_k = k^-1/2; requires theta in [1, 2).
///   alg2_general     : rho_k = k^1/2, eta_k = k^-1/2 / (4 log(k+2)),
///                      alpha_k = k^-1/2.
/// Logarithms are natural throughout.
enum class ScheduleKind { alg1_general, alg2_subquadratic, alg2_general };

struct ScheduleFamily {
  ScheduleKind kind = ScheduleKind::alg1_general;
  double theta_hat = 1.0;  // alg1_general only
  double theta = 1.0;      // alg2_subquadratic only
  double nu = 1.0 / 3.0;   // derived, alg1_general only

  static ScheduleFamily alg1_general(double theta_hat);
  static ScheduleFamily alg2_subquadratic(double theta);
  static ScheduleFamily alg2_general();
};

struct ScheduleValues {
  long long k = 0;
  double rho = 0.0;
  double eta = 0.0;
  double alpha = 0.0;
};

/// Exact closed-form schedule values at iteration k >= 1.
ScheduleValues schedule_at(const ScheduleFamily& family, long long k);

/// Burn-in threshold and feasibility-envelope constant matching the chosen
/// schedule family. The burn-in contains exponentials of the penalty
/// smoothness constant and can leave double range for moderately
/// conditioned problems; that case is reported as desk_reachable = false
/// with an infinite burn_in rather than an error.
struct TheoryConstants {
  double penalty_smoothness = 0.0;        // L
  double burn_in = 0.0;                   // K tilde (ceiled; +inf if out of range)
  double envelope_constant = 0.0;         // C (>= 1, +inf if out of range)
  double step_condition_threshold = 0.0;  // (sqrt(5) - 1) / (2 L)
  bool desk_reachable = false;
};

TheoryConstants theory_constants(const ScheduleFamily& family, const SmoothnessConstants& consts);

/// rho * eta <= (sqrt(5) - 1) / (2 L), boundary inclusive.
bool step_condition_holds(const ScheduleValues& values, double penalty_smoothness);

}  // namespace stocpen
