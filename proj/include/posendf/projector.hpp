#pragma once

#include <cstddef>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "posendf/field_model.hpp"
#include "posendf/so3.hpp"

namespace posendf {

struct ProjectionConfig {
  double alpha = 1.0;
  std::size_t max_iters = 100;
  double tol = 1e-3;
  std::size_t renorm_period = 1;
  bool record_trajectory = false;

  void validate() const;
};

/// A non-negative scalar field over ambient pose coordinates (4K values).
class DifferentiableField {
 public:
  virtual ~DifferentiableField() = default;

  virtual std::size_t num_joints() const = 0;
  virtual double value(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& x) const = 0;

  /// Defaults to separate value() and gradient() calls.
  virtual std::pair<double, Eigen::VectorXd> value_and_gradient(const Eigen::VectorXd& x) const;

  double value(const Pose& p) const { return value(p.ambient()); }
};

/// Adapts a trained FieldModel.
class ModelField final : public DifferentiableField {
 public:
  explicit ModelField(const FieldModel& model) : model_(model) {}

  std::size_t num_joints() const override { return model_.num_joints(); }
  double value(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const override;
  std::pair<double, Eigen::VectorXd> value_and_gradient(const Eigen::VectorXd& x) const override;

  using DifferentiableField::value;

 private:
  const FieldModel& model_;
};

/// f(x) = pose_distance(normalize(x), target) with its exact ambient
/// gradient; zero gradient at the target itself.
class PoseDistanceField final : public DifferentiableField {
 public:
  PoseDistanceField(Pose target, const SkeletonTopology& skel);

  std::size_t num_joints() const override { return target_.size(); }
  double value(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const override;
  std::pair<double, Eigen::VectorXd> value_and_gradient(const Eigen::VectorXd& x) const override;

  using DifferentiableField::value;

 private:
  Pose target_;
  const SkeletonTopology& skel_;
};

struct ProjectionResult {
  Pose pose;
  double value = 0.0;
  std::size_t iters = 0;
  bool converged = false;  // value < tol
  std::vector<Pose> trajectory;  // normalized iterates, when recorded
};

/// Iterates x <- x - alpha * f(x) * grad f(x) in ambient coordinates,
/// normalizing every joint every `renorm_period` steps. Stops once f < tol
/// or after max_iters steps and returns the normalized iterate with the
/// smallest field value seen (the input included).
ProjectionResult project(const DifferentiableField& field, const Pose& pose, const ProjectionConfig& cfg);

struct BatchProjection {
  std::optional<ProjectionResult> result;
  std::exception_ptr error;  // set when this element failed
};

/// Element-wise project; a failure is recorded on its element only.
std::vector<BatchProjection> project_batch(
    const DifferentiableField& field,
    const std::vector<Pose>& poses,
    const ProjectionConfig& cfg,
    unsigned threads = 1);

}  // namespace posendf
