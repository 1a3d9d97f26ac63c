#include "stocpen/problem.hpp"

#include <cmath>
#include <stdexcept>

namespace stocpen {

void SmoothnessConstants::validate() const {
  auto nonneg = [](double v, const char* what) {
    if (std::isnan(v) || v < 0.0)
      throw std::invalid_argument(std::string("SmoothnessConstants: ") + what + " must be >= 0");
  };
  nonneg(lipschitz_f, "lipschitz_f");
  nonneg(lipschitz_c, "lipschitz_c");
  nonneg(constraint_bound, "constraint_bound");
  nonneg(smoothness_c, "smoothness_c");
  nonneg(noise_sigma, "noise_sigma");
  if (!(error_bound_gamma > 0.0))
    throw std::invalid_argument("SmoothnessConstants: error_bound_gamma must be > 0");
  if (!(error_bound_theta >= 1.0))
    throw std::invalid_argument("SmoothnessConstants: error_bound_theta must be >= 1");
  if (!std::isfinite(penalty_smoothness()))
    throw std::invalid_argument("SmoothnessConstants: penalty smoothness constant is not finite");
}

ProblemInstance::ProblemInstance(std::string name,
                                 std::shared_ptr<const ObjectiveModel> objective,
                                 std::shared_ptr<const ConstraintMap> equality,
                                 std::shared_ptr<const ConstraintMap> inequality,
                                 FeasibleSet set,
                                 SmoothnessConstants constants,
                                 double region_radius)
    : name_(std::move(name)),
      objective_(std::move(objective)),
      equality_(std::move(equality)),
      inequality_(std::move(inequality)),
      set_(std::move(set)),
      constants_(constants),
      region_radius_(region_radius) {
  if (!equality_) throw std::invalid_argument("ProblemInstance: equality constraint map required");
  if (equality_->input_dim() != set_.dimension())
    throw std::invalid_argument("ProblemInstance: constraint/set dimension mismatch");
  if (inequality_ && inequality_->input_dim() != set_.dimension())
    throw std::invalid_argument("ProblemInstance: inequality/set dimension mismatch");
  if (objective_ && objective_->dim() != set_.dimension())
    throw std::invalid_argument("ProblemInstance: objective/set dimension mismatch");
  if (!(region_radius_ > 0.0))
    throw std::invalid_argument("ProblemInstance: region_radius must be positive");
  constants_.validate();
}

Eigen::VectorXd ProblemInstance::noise_draw(SampleContext& ctx) const {
  const double sigma = constants_.noise_sigma;
  const Eigen::Index n = dimension();
  if (sigma == 0.0) return Eigen::VectorXd::Zero(n);
  // Gaussian with covariance (sigma^2/n) I, truncated at radius 6 sigma.
  // Symmetric truncation keeps the draw unbiased and makes sigma^2 a
  // certified second-moment bound rather than an estimate.
  Eigen::VectorXd w = ctx.normal_vector(n) * (sigma / std::sqrt(static_cast<double>(n)));
  const double nrm = w.norm();
  const double cap = 6.0 * sigma;
  if (nrm > cap) w *= cap / nrm;
  return w;
}

Eigen::VectorXd ProblemInstance::sample_gradient(const Eigen::VectorXd& x, SampleContext& ctx) const {
  if (x.size() != dimension())
    throw std::invalid_argument("sample_gradient: dimension mismatch");
  if (!set_.contains(x, 1e-9))
    throw std::invalid_argument("sample_gradient: x is not a member of the feasible set");
  if (!objective_) throw std::logic_error("sample_gradient: instance has no objective model");
  return objective_->mean_gradient(x) + noise_draw(ctx);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> ProblemInstance::sample_gradient_pair(
    const Eigen::VectorXd& x_first, const Eigen::VectorXd& x_second, SampleContext& ctx) const {
  if (x_first.size() != dimension() || x_second.size() != dimension())
    throw std::invalid_argument("sample_gradient_pair: dimension mismatch");
  if (!set_.contains(x_first, 1e-9) || !set_.contains(x_second, 1e-9))
    throw std::invalid_argument("sample_gradient_pair: point is not a member of the feasible set");
  if (!objective_) throw std::logic_error("sample_gradient_pair: instance has no objective model");
  const Eigen::VectorXd w = noise_draw(ctx);
  return {objective_->mean_gradient(x_first) + w, objective_->mean_gradient(x_second) + w};
}

Eigen::VectorXd ProblemInstance::mean_gradient(const Eigen::VectorXd& x) const {
  if (!objective_) throw std::logic_error("mean_gradient: instance has no objective model");
  if (x.size() != dimension()) throw std::invalid_argument("mean_gradient: dimension mismatch");
  return objective_->mean_gradient(x);
}

ConstraintEvaluation ProblemInstance::eval_constraint(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) throw std::invalid_argument("eval_constraint: dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("eval_constraint: x has non-finite entries");
  ConstraintEvaluation e = equality_->eval(x);
  if (e.value.size() != constraint_dim())
    throw std::logic_error("eval_constraint: evaluator output length mismatch");
  return e;
}

ConstraintEvaluation ProblemInstance::eval_inequality(const Eigen::VectorXd& x) const {
  if (!inequality_) throw std::logic_error("eval_inequality: instance has no inequality map");
  if (x.size() != dimension()) throw std::invalid_argument("eval_inequality: dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("eval_inequality: x has non-finite entries");
  return inequality_->eval(x);
}

}  // namespace stocpen
