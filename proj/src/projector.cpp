#include "posendf/projector.hpp"

#include <algorithm>
#include <cmath>

#include "posendf/error.hpp"
#include "posendf/parallel.hpp"

namespace posendf {

void ProjectionConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("projection: alpha must be positive");
  if (max_iters < 1) throw ConfigError("projection: max_iters must be at least 1");
  if (!(tol >= 0.0)) throw ConfigError("projection: tol must be non-negative");
  if (renorm_period < 1) throw ConfigError("projection: renorm_period must be at least 1");
}

std::pair<double, Eigen::VectorXd> DifferentiableField::value_and_gradient(const Eigen::VectorXd& x) const {
  return {value(x), gradient(x)};
}

double ModelField::value(const Eigen::VectorXd& x) const { return field_value(model_, x); }

Eigen::VectorXd ModelField::gradient(const Eigen::VectorXd& x) const { return input_gradient(model_, x); }

std::pair<double, Eigen::VectorXd> ModelField::value_and_gradient(const Eigen::VectorXd& x) const {
  const EvalTrace trace = forward_batch(model_, x);
  return {trace.values[0], input_gradient_batch(model_, trace).col(0)};
}

PoseDistanceField::PoseDistanceField(Pose target, const SkeletonTopology& skel)
    : target_(std::move(target)), skel_(skel) {
  if (target_.size() != skel_.size()) throw DimensionMismatch("PoseDistanceField: target does not match skeleton");
}

double PoseDistanceField::value(const Eigen::VectorXd& x) const {
  return pose_distance(Pose::from_ambient(x), target_, skel_);
}

Eigen::VectorXd PoseDistanceField::gradient(const Eigen::VectorXd& x) const {
  return value_and_gradient(x).second;
}

std::pair<double, Eigen::VectorXd> PoseDistanceField::value_and_gradient(const Eigen::VectorXd& x) const {
  const std::size_t k = target_.size();
  if (x.size() != static_cast<Eigen::Index>(4 * k)) throw DimensionMismatch("PoseDistanceField: wrong input size");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const auto seg = static_cast<Eigen::Index>(4 * j);
    const Eigen::Vector4d xj = x.segment<4>(seg);
    const double n = xj.norm();
    if (!(n > 1e-12)) throw DegenerateQuaternion("PoseDistanceField: zero joint");
    const Eigen::Vector4d u = xj / n;
    const Eigen::Vector4d t = u.dot(target_[j].vector()) < 0.0 ? Eigen::Vector4d(-target_[j].vector()) : target_[j].vector();
    const double g = 2.0 * std::atan2((u - t).norm(), (u + t).norm());
    sum += 0.5 * skel_.weight(j) * g * g;
    // d(g^2/2)/dx = -(g / sin g) * (t - u (u.t)) / n; the ratio tends to 1 at g = 0.
    const double ratio = g > 1e-8 ? g / std::sin(g) : 1.0;
    grad.segment<4>(seg) = (-0.5 * skel_.weight(j) * ratio / n) * (t - u * u.dot(t));
  }
  const double d = std::sqrt(sum);
  if (d > 0.0) {
    grad /= d;
  } else {
    grad.setZero();
  }
  return {d, grad};
}

namespace {

void normalize_joints(Eigen::VectorXd& x) {
  for (Eigen::Index i = 0; i < x.size(); i += 4) {
    const double n = x.segment<4>(i).norm();
    if (!(n > 1e-12)) throw DegenerateQuaternion("projection: joint collapsed to zero norm");
    x.segment<4>(i) /= n;
  }
}

}  // namespace

ProjectionResult project(const DifferentiableField& field, const Pose& pose, const ProjectionConfig& cfg) {
  cfg.validate();
  if (pose.size() != field.num_joints()) throw DimensionMismatch("project: pose does not match field K");
  Eigen::VectorXd x = pose.ambient();
  auto [f, g] = field.value_and_gradient(x);
  if (!std::isfinite(f)) throw NumericalError("project: non-finite field value");

  ProjectionResult out;
  out.pose = pose;
  out.value = f;
  if (cfg.record_trajectory) out.trajectory.push_back(pose);
  if (f < cfg.tol) {
    out.converged = true;
    return out;
  }
  const double input_value = f;
  bool best_normalized = true;
  std::size_t i = 0;
  while (i < cfg.max_iters) {
    ++i;
    x -= (cfg.alpha * f) * g;
    if (!x.allFinite()) throw NumericalError("project: non-finite iterate");
    const bool renorm = (i % cfg.renorm_period == 0) || i == cfg.max_iters;
    if (renorm) normalize_joints(x);
    std::tie(f, g) = field.value_and_gradient(x);
    if (!std::isfinite(f) || !g.allFinite()) throw NumericalError("project: non-finite field value");
    if (cfg.record_trajectory || f < out.value) {
      Pose current = Pose::from_ambient(x);
      if (f < out.value) {
        out.pose = current;
        out.value = f;
        best_normalized = renorm;
      }
      if (cfg.record_trajectory) out.trajectory.push_back(std::move(current));
    }
    if (f < cfg.tol) break;
  }
  out.iters = i;
  if (!best_normalized) {
    // The best value was seen off the sphere; report the value of the
    // returned (normalized) pose and never do worse than the input.
    const double v = field.value(out.pose.ambient());
    if (v <= input_value) {
      out.value = v;
    } else {
      out.pose = pose;
      out.value = input_value;
    }
  }
  out.converged = out.value < cfg.tol;
  return out;
}

std::vector<BatchProjection> project_batch(
    const DifferentiableField& field,
    const std::vector<Pose>& poses,
    const ProjectionConfig& cfg,
    unsigned threads) {
  cfg.validate();
  std::vector<BatchProjection> out(poses.size());
  parallel_for(poses.size(), threads, [&](std::size_t i) {
    try {
      out[i].result = project(field, poses[i], cfg);
    } catch (const Error&) {
      out[i].error = std::current_exception();
    }
  });
  return out;
}

}  // namespace posendf
