#include "stocpen/feasible_set.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stocpen {

namespace {
constexpr double kBoundaryTol = 1e-12;
constexpr double kMemberTol = 1e-9;
}  // namespace

FeasibleSet FeasibleSet::whole_space(Eigen::Index dim) {
  if (dim <= 0) throw std::invalid_argument("FeasibleSet: dimension must be positive");
  return FeasibleSet(SetKind::whole_space, dim);
}

FeasibleSet FeasibleSet::box(Eigen::VectorXd lower, Eigen::VectorXd upper) {
  if (lower.size() == 0 || lower.size() != upper.size())
    throw std::invalid_argument("FeasibleSet::box: bound dimensions mismatch");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]) || lower[i] > upper[i])
      throw std::invalid_argument("FeasibleSet::box: requires lower <= upper componentwise");
  }
  FeasibleSet s(SetKind::box, lower.size());
  s.lower_ = std::move(lower);
  s.upper_ = std::move(upper);
  return s;
}

FeasibleSet FeasibleSet::ball(Eigen::VectorXd center, double radius) {
  if (center.size() == 0) throw std::invalid_argument("FeasibleSet::ball: empty center");
  if (!(radius > 0.0)) throw std::invalid_argument("FeasibleSet::ball: radius must be positive");
  FeasibleSet s(SetKind::euclidean_ball, center.size());
  s.center_ = std::move(center);
  s.radius_ = radius;
  return s;
}

void FeasibleSet::require_dim(const Eigen::VectorXd& v, const char* what) const {
  if (v.size() != dim_)
    throw std::invalid_argument(std::string("FeasibleSet: dimension mismatch in ") + what);
}

Eigen::VectorXd FeasibleSet::project(const Eigen::VectorXd& v) const {
  require_dim(v, "project");
  switch (kind_) {
    case SetKind::whole_space:
      return v;
    case SetKind::box: {
      Eigen::VectorXd out(dim_);
      for (Eigen::Index i = 0; i < dim_; ++i) out[i] = std::clamp(v[i], lower_[i], upper_[i]);
      return out;
    }
    case SetKind::euclidean_ball: {
      const Eigen::VectorXd d0 = v - center_;
      if (d0.norm() <= radius_) return v;
      // Rescale until the stored point is inside by its own arithmetic, so
      // projecting a second time is exactly the identity.
      Eigen::VectorXd out = center_ + d0 * (radius_ / d0.norm());
      for (int i = 0; i < 32; ++i) {
        const Eigen::VectorXd d = out - center_;
        const double nrm = d.norm();
        if (nrm <= radius_) break;
        Eigen::VectorXd next = center_ + d * (radius_ / nrm);
        if (next == out) break;
        out = std::move(next);
      }
      return out;
    }
  }
  throw std::logic_error("FeasibleSet: unknown kind");
}

bool FeasibleSet::contains(const Eigen::VectorXd& x, double tol) const {
  require_dim(x, "contains");
  switch (kind_) {
    case SetKind::whole_space:
      return x.allFinite();
    case SetKind::box:
      for (Eigen::Index i = 0; i < dim_; ++i) {
        const double scale = std::max({1.0, std::abs(lower_[i]), std::abs(upper_[i])});
        if (x[i] < lower_[i] - tol * scale || x[i] > upper_[i] + tol * scale) return false;
      }
      return true;
    case SetKind::euclidean_ball:
      return (x - center_).norm() <= radius_ * (1.0 + tol) + tol;
  }
  return false;
}

double FeasibleSet::normal_cone_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
  require_dim(x, "normal_cone_distance");
  require_dim(v, "normal_cone_distance");
  if (!contains(x, kMemberTol))
    throw std::invalid_argument("normal_cone_distance: x is not a member of the set");

  switch (kind_) {
    case SetKind::whole_space:
      return v.norm();
    case SetKind::box: {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < dim_; ++i) {
        const double scale = std::max(1.0, std::abs(x[i]));
        const bool at_lower = std::isfinite(lower_[i]) && x[i] - lower_[i] <= kBoundaryTol * scale;
        const bool at_upper = std::isfinite(upper_[i]) && upper_[i] - x[i] <= kBoundaryTol * scale;
        double r;
        if (at_lower && at_upper) {
          r = 0.0;  // pinned coordinate, normal cone is all of R
        } else if (at_lower) {
          r = std::max(-v[i], 0.0);
        } else if (at_upper) {
          r = std::max(v[i], 0.0);
        } else {
          r = v[i];
        }
        acc += r * r;
      }
      return std::sqrt(acc);
    }
    case SetKind::euclidean_ball: {
      const Eigen::VectorXd u = x - center_;
      const double nrm = u.norm();
      if (nrm < radius_ * (1.0 - kBoundaryTol)) return v.norm();
      const double s = v.dot(u);
      if (s >= 0.0) return v.norm();
      return (v - (s / u.squaredNorm()) * u).norm();
    }
  }
  throw std::logic_error("FeasibleSet: unknown kind");
}

Eigen::VectorXd FeasibleSet::sample_member(SampleContext& ctx, double region_radius) const {
  if (!(region_radius > 0.0))
    throw std::invalid_argument("sample_member: region_radius must be positive");
  switch (kind_) {
    case SetKind::whole_space: {
      Eigen::VectorXd dir = ctx.normal_vector(dim_);
      const double nrm = dir.norm();
      if (nrm == 0.0) return Eigen::VectorXd::Zero(dim_);
      const double r = region_radius * std::pow(ctx.uniform(), 1.0 / static_cast<double>(dim_));
      return dir * (r / nrm);
    }
    case SetKind::box: {
      Eigen::VectorXd out(dim_);
      for (Eigen::Index i = 0; i < dim_; ++i) {
        const double lo = std::max(lower_[i], -region_radius);
        const double hi = std::min(upper_[i], region_radius);
        // A coordinate interval entirely outside the region degenerates to
        // its nearest in-box point.
        out[i] = lo >= hi ? std::clamp(0.0, lower_[i], upper_[i]) : lo + ctx.uniform() * (hi - lo);
      }
      return out;
    }
    case SetKind::euclidean_ball: {
      Eigen::VectorXd dir = ctx.normal_vector(dim_);
      const double nrm = dir.norm();
      if (nrm == 0.0) return center_;
      const double r = radius_ * std::pow(ctx.uniform(), 1.0 / static_cast<double>(dim_));
      return center_ + dir * (r / nrm);
    }
  }
  throw std::logic_error("FeasibleSet: unknown kind");
}

const Eigen::VectorXd& FeasibleSet::lower() const {
  if (kind_ != SetKind::box) throw std::logic_error("FeasibleSet::lower: not a box");
  return lower_;
}

const Eigen::VectorXd& FeasibleSet::upper() const {
  if (kind_ != SetKind::box) throw std::logic_error("FeasibleSet::upper: not a box");
  return upper_;
}

const Eigen::VectorXd& FeasibleSet::center() const {
  if (kind_ != SetKind::euclidean_ball) throw std::logic_error("FeasibleSet::center: not a ball");
  return center_;
}

double FeasibleSet::radius() const {
  if (kind_ != SetKind::euclidean_ball) throw std::logic_error("FeasibleSet::radius: not a ball");
  return radius_;
}

}  // namespace stocpen
