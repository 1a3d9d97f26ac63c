#include "stocpen/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "stocpen/fault.hpp"

namespace stocpen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// log(DBL_MAX); any burn-in term whose log exceeds this is out of desk range.
constexpr double kMaxLog = 709.78;

double log_of_log_e2t_plus_2(double two_theta) {
  // log(log(e^{2 theta} + 2)) computed without overflowing e^{2 theta}.
  const double inner = two_theta + std::log1p(2.0 * std::exp(-two_theta));
  return std::log(inner);
}

double require(double v, const char* what) {
  if (std::isnan(v)) throw std::invalid_argument(std::string("theory_constants: missing ") + what);
  return v;
}

struct BurnIn {
  double value;  // ceiled, >= 1, +inf when out of double range
  bool reachable;
};

BurnIn from_logs(const std::vector<double>& log_terms) {
  double max_log = -kInf;
  for (double t : log_terms) max_log = std::max(max_log, t);
  if (max_log > kMaxLog) return {kInf, false};
  const double raw = std::exp(max_log);
  return {std::max(1.0, std::ceil(raw)), true};
}

}  // namespace

ScheduleFamily ScheduleFamily::alg1_general(double theta_hat) {
  if (!(theta_hat >= 1.0))
    throw std::invalid_argument("ScheduleFamily: theta_hat must be >= 1");
  ScheduleFamily f;
  f.kind = ScheduleKind::alg1_general;
  f.theta_hat = theta_hat;
  f.nu = std::min(theta_hat / (theta_hat + 2.0), 0.5);
  return f;
}

ScheduleFamily ScheduleFamily::alg2_subquadratic(double theta) {
  if (!(theta >= 1.0) || theta >= 2.0)
    throw std::invalid_argument("ScheduleFamily: alg2-subquadratic requires theta in [1, 2)");
  ScheduleFamily f;
  f.kind = ScheduleKind::alg2_subquadratic;
  f.theta = theta;
  f.nu = 0.0;
  return f;
}

ScheduleFamily ScheduleFamily::alg2_general() {
  ScheduleFamily f;
  f.kind = ScheduleKind::alg2_general;
  f.nu = 0.0;
  return f;
}

ScheduleValues schedule_at(const ScheduleFamily& family, long long k) {
  if (k < 1) throw std::domain_error("schedule_at: k must be >= 1");
  const double kd = static_cast<double>(k);
  const double log_k2 = std::log(kd + 2.0);
  ScheduleValues v;
  v.k = k;
  switch (family.kind) {
    case ScheduleKind::alg1_general:
      v.rho = std::pow(kd, family.nu);
      v.eta = std::pow(kd, -family.nu) / (4.0 * log_k2);
      v.alpha = std::pow(kd, -2.0 * family.nu);
      break;
    case ScheduleKind::alg2_subquadratic:
      v.rho = std::pow(kd, family.theta / 4.0);
      v.eta = std::pow(kd, -0.5) / log_k2;
      v.alpha = std::pow(kd, -0.5);
      break;
    case ScheduleKind::alg2_general:
      v.rho = std::pow(kd, 0.5);
      v.eta = std::pow(kd, -0.5) / (4.0 * log_k2);
      v.alpha = std::pow(kd, -0.5);
      break;
  }
  return v;
}

TheoryConstants theory_constants(const ScheduleFamily& family, const SmoothnessConstants& consts) {
  consts.validate();
  const double L = consts.penalty_smoothness();
  const double theta = consts.error_bound_theta;
  const double gamma = consts.error_bound_gamma;
  const double cc = consts.constraint_bound;
  const double lf = consts.lipschitz_f;
  const double log2 = std::numbers::ln2;

  TheoryConstants out;
  out.penalty_smoothness = L;
  out.step_condition_threshold = (std::sqrt(5.0) - 1.0) / (2.0 * L);

  BurnIn burn{1.0, true};
  double envelope = 1.0;

  switch (family.kind) {
    case ScheduleKind::alg1_general: {
      const double lbar = require(consts.avg_smoothness_f, "avg_smoothness_f");
      const double nu = family.nu;
      std::vector<double> logs;
      logs.push_back(lbar > 0 ? std::log(2.0 * lbar) / nu : -kInf);
      logs.push_back(6.0 * std::pow(2.0, nu / 2.0) * lbar * lbar);
      logs.push_back(2.0 * L);
      logs.push_back(2.0 * theta);
      logs.push_back(2.0 * theta *
                     (-1.0 - 2.0 * std::log(gamma) + (6.0 - theta) * log2 +
                      log_of_log_e2t_plus_2(2.0 * theta)));
      burn = from_logs(logs);
      envelope = std::max({1.0, std::pow(burn.value, 2.0 * nu / theta) * cc * cc / 2.0,
                           std::pow(2.0, 3.0 - theta) * lf * lf / (gamma * gamma)});
      break;
    }
    case ScheduleKind::alg2_subquadratic: {
      const double lsm = require(consts.smoothness_f, "smoothness_f");
      if (!(theta < 2.0))
        throw std::invalid_argument("theory_constants: alg2-subquadratic requires theta < 2");
      std::vector<double> logs;
      logs.push_back(2.0);
      logs.push_back(lsm > 0 ? std::log(64.0 * lsm * lsm) : -kInf);
      logs.push_back(8.0 * lsm * lsm);
      logs.push_back(L > 0 ? 4.0 / (2.0 - theta) * std::log(8.0 * L) : -kInf);
      logs.push_back(4.0 / (2.0 - theta) *
                     (-1.0 - 2.0 * std::log(gamma) + (2.0 - theta / 2.0) * log2 +
                      std::log(std::log(std::exp(2.0) + 2.0))));
      burn = from_logs(logs);
      envelope = std::max({1.0, std::sqrt(burn.value) * cc * cc / 2.0,
                           std::pow(2.0, 2.0 - theta / 2.0) * lf * lf / (gamma * gamma)});
      break;
    }
    case ScheduleKind::alg2_general: {
      const double lsm = require(consts.smoothness_f, "smoothness_f");
      std::vector<double> logs;
      logs.push_back(lsm > 0 ? std::log(4.0 * lsm * lsm) : -kInf);
      logs.push_back(2.0 * lsm * lsm);
      logs.push_back(2.0 * L);
      logs.push_back(2.0 * theta);
      logs.push_back(2.0 * theta *
                     (-1.0 - 2.0 * std::log(gamma) + (6.0 - theta) * log2 +
                      log_of_log_e2t_plus_2(2.0 * theta)));
      burn = from_logs(logs);
      envelope = std::max({1.0, std::pow(burn.value, 1.0 / theta) * cc * cc / 2.0,
                           std::pow(2.0, 3.0 - theta) * lf * lf / (gamma * gamma)});
      break;
    }
  }

  out.burn_in = burn.value;
  out.desk_reachable = burn.reachable;
  out.envelope_constant = envelope;
  return out;
}

bool step_condition_holds(const ScheduleValues& values, double penalty_smoothness) {
  if (!(penalty_smoothness > 0.0)) return true;  // h is affine; any step is safe
  const double threshold = (std::sqrt(5.0) - 1.0) / (2.0 * penalty_smoothness);
  if (fault::step_condition_flipped()) return values.rho * values.eta >= threshold;
  return values.rho * values.eta <= threshold;
}

}  // namespace stocpen
