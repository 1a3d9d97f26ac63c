#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "stocpen/feasible_set.hpp"
#include "stocpen/rng.hpp"

namespace stocpen {

/// Certified problem constants. gamma/theta are the error-bound modulus and
/// exponent; the rest are Lipschitz/smoothness/noise bounds valid on the
/// instance's certified region.
struct SmoothnessConstants {
  double lipschitz_f = 0.0;       // bound on ||grad f|| (L_f)
  double lipschitz_c = 0.0;       // Lipschitz constant of c
  double constraint_bound = 0.0;  // bound on ||c(x)|| over the certified region
  double smoothness_c = 0.0;      // smoothness constant of c
  double avg_smoothness_f = std::numeric_limits<double>::quiet_NaN();  // average smoothness of grad f~
  double smoothness_f = std::numeric_limits<double>::quiet_NaN();      // smoothness of grad f
  double noise_sigma = 0.0;       // gradient-noise second-moment bound (std dev)
  double error_bound_gamma = 0.0;
  double error_bound_theta = 1.0;
  std::optional<double> q1_star;  // lower bound on min_X {f + ||c||^2/2}, reporting only

  /// Smoothness constant of ||c(x)||^2/2 implied by the constraint bounds.
  double penalty_smoothness() const { return lipschitz_c * lipschitz_c + constraint_bound * smoothness_c; }

  void validate() const;
};

/// One constraint evaluation: the value c(x) and the transpose-Jacobian
/// apply at the same point. Solvers only ever need grad c(x) * w, never the
/// dense Jacobian.
struct ConstraintEvaluation {
  Eigen::VectorXd value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> jac_t_apply;
};

/// Deterministic smooth mapping c: R^n -> R^m.
class ConstraintMap {
 public:
  virtual ~ConstraintMap() = default;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual ConstraintEvaluation eval(const Eigen::VectorXd& x) const = 0;
};

/// Smooth objective exposed through its exact mean gradient. Only the noise
/// wrapper and diagnostics touch this directly.
class ObjectiveModel {
 public:
  virtual ~ObjectiveModel() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Eigen::VectorXd mean_gradient(const Eigen::VectorXd& x) const = 0;
};

/// Immutable problem bundle: stochastic objective oracle, deterministic
/// constraints, feasible set, certified constants. Safe to share across
/// concurrent runs; each run owns its SampleContexts.
class ProblemInstance {
 public:
  ProblemInstance(std::string name,
                  std::shared_ptr<const ObjectiveModel> objective,
                  std::shared_ptr<const ConstraintMap> equality,
                  std::shared_ptr<const ConstraintMap> inequality,  // may be null
                  FeasibleSet set,
                  SmoothnessConstants constants,
                  double region_radius);

  const std::string& name() const { return name_; }
  Eigen::Index dimension() const { return set_.dimension(); }
  Eigen::Index constraint_dim() const { return equality_->output_dim(); }
  const FeasibleSet& feasible_set() const { return set_; }
  const SmoothnessConstants& constants() const { return constants_; }

  /// Radius of the region over which the constants were certified; also the
  /// sampling radius for random members of unbounded sets.
  double region_radius() const { return region_radius_; }

  /// One fresh sample xi, one gradient evaluation grad f~(x, xi).
  /// Unbiased for the mean gradient with noise second moment <= sigma^2.
  Eigen::VectorXd sample_gradient(const Eigen::VectorXd& x, SampleContext& ctx) const;

  /// One fresh sample xi, evaluated at two points with the same xi
  /// (first, second). Two gradient evaluations, one sample.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> sample_gradient_pair(const Eigen::VectorXd& x_first,
                                                                   const Eigen::VectorXd& x_second,
                                                                   SampleContext& ctx) const;

  /// Exact mean gradient; diagnostics only, never consumed by solvers.
  bool has_mean_gradient() const { return objective_ != nullptr; }
  Eigen::VectorXd mean_gradient(const Eigen::VectorXd& x) const;

  ConstraintEvaluation eval_constraint(const Eigen::VectorXd& x) const;

  bool has_inequality() const { return inequality_ != nullptr; }
  Eigen::Index inequality_dim() const { return inequality_ ? inequality_->output_dim() : 0; }
  ConstraintEvaluation eval_inequality(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd noise_draw(SampleContext& ctx) const;

  std::string name_;
  std::shared_ptr<const ObjectiveModel> objective_;
  std::shared_ptr<const ConstraintMap> equality_;
  std::shared_ptr<const ConstraintMap> inequality_;
  FeasibleSet set_;
  SmoothnessConstants constants_;
  double region_radius_;
};

/// The restricted surface a solver may touch: stochastic oracle, constraint
/// evaluations, feasible set, constants. Keeps the exact mean gradient out
/// of reach of the optimization path.
class SolverProblemView {
 public:
  explicit SolverProblemView(const ProblemInstance& p) : p_(&p) {}

  Eigen::Index dimension() const { return p_->dimension(); }
  const FeasibleSet& feasible_set() const { return p_->feasible_set(); }
  const SmoothnessConstants& constants() const { return p_->constants(); }
  Eigen::VectorXd sample_gradient(const Eigen::VectorXd& x, SampleContext& ctx) const {
    return p_->sample_gradient(x, ctx);
  }
  std::pair<Eigen::VectorXd, Eigen::VectorXd> sample_gradient_pair(const Eigen::VectorXd& a,
                                                                   const Eigen::VectorXd& b,
                                                                   SampleContext& ctx) const {
    return p_->sample_gradient_pair(a, b, ctx);
  }
  ConstraintEvaluation eval_constraint(const Eigen::VectorXd& x) const { return p_->eval_constraint(x); }
  bool has_inequality() const { return p_->has_inequality(); }
  ConstraintEvaluation eval_inequality(const Eigen::VectorXd& x) const { return p_->eval_inequality(x); }

 private:
  const ProblemInstance* p_;
};

}  // namespace stocpen
