#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace posendf {

class Pose;

/// Kinematic forest over K joints. Joints are stored in topological order,
/// so every parent index is smaller than the index of its child.
class SkeletonTopology {
 public:
  SkeletonTopology() = default;

  /// Validates the forest and derives depths. When `weights` is empty the
  /// default scheme w_i = 2^-depth(i) is used.
  SkeletonTopology(
      std::vector<std::optional<std::size_t>> parents,
      std::vector<Eigen::Vector3d> offsets,
      std::vector<double> weights = {});

  /// Complete binary tree (parent of k is (k-1)/2) with unit offsets cycling
  /// through the x, y and z axes; the root sits at the origin.
  static SkeletonTopology binary_tree(std::size_t k);

  std::size_t size() const { return parents_.size(); }
  const std::optional<std::size_t>& parent(std::size_t k) const { return parents_[k]; }
  const std::vector<std::optional<std::size_t>>& parents() const { return parents_; }
  const Eigen::Vector3d& offset(std::size_t k) const { return offsets_[k]; }
  const std::vector<Eigen::Vector3d>& offsets() const { return offsets_; }
  double weight(std::size_t k) const { return weights_[k]; }
  const std::vector<double>& weights() const { return weights_; }
  int depth(std::size_t k) const { return depths_[k]; }
  const std::vector<std::size_t>& children(std::size_t k) const { return children_[k]; }

  /// True when `ancestor` lies on the parent chain of `joint` (a joint is not
  /// its own ancestor).
  bool is_ancestor(std::size_t ancestor, std::size_t joint) const;

  bool operator==(const SkeletonTopology& other) const;

 private:
  std::vector<std::optional<std::size_t>> parents_;
  std::vector<Eigen::Vector3d> offsets_;
  std::vector<double> weights_;
  std::vector<int> depths_;
  std::vector<std::vector<std::size_t>> children_;
};

/// JSON layout: {"k": int, "parents": [int|null], "offsets": [[x,y,z]], "weights": [w]}.
std::string skeleton_to_json(const SkeletonTopology& skel);
SkeletonTopology skeleton_from_json(const std::string& text);
SkeletonTopology load_skeleton(const std::string& path);
void save_skeleton(const SkeletonTopology& skel, const std::string& path);

/// World-space joint positions, one per joint in skeleton order.
struct JointPositions {
  std::vector<Eigen::Vector3d> positions;

  std::size_t size() const { return positions.size(); }
  const Eigen::Vector3d& operator[](std::size_t k) const { return positions[k]; }
  Eigen::Vector3d& operator[](std::size_t k) { return positions[k]; }
};

/// Rotation matrix of the normalized 4-vector (w, x, y, z).
Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q);

/// position(k) = position(parent) + R_global(parent) * offset(k); root-level
/// joints sit at their offset and R_global(root) is the root's own rotation.
JointPositions forward_kinematics(const Pose& pose, const SkeletonTopology& skel);

/// Same, evaluated on ambient coordinates (4 per joint); each 4-vector is
/// normalized before use.
JointPositions forward_kinematics(
    const Eigen::Ref<const Eigen::VectorXd>& ambient,
    const SkeletonTopology& skel);

/// Vector-Jacobian product of ambient forward kinematics: given dL/dposition
/// for every joint, returns dL/d(ambient coordinates). Because each joint is
/// normalized before use, the result is tangent to each joint's 3-sphere.
Eigen::VectorXd forward_kinematics_vjp(
    const Eigen::Ref<const Eigen::VectorXd>& ambient,
    const SkeletonTopology& skel,
    const std::vector<Eigen::Vector3d>& position_adjoints);

/// (1/K) sum_k |a_k - b_k|.
double mean_joint_distance(const JointPositions& a, const JointPositions& b);

}  // namespace posendf
