#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "posendf/skeleton.hpp"

namespace posendf {

using Rng = std::mt19937_64;

/// A point on S^3 stored as (w, x, y, z). Every instance has unit norm to
/// within 1e-9; q and -q name the same rotation.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;  // identity

  static UnitQuaternion identity() { return {}; }

  /// Normalizes (w, x, y, z). Throws DegenerateQuaternion when the norm is
  /// at most 1e-12.
  static UnitQuaternion normalized(double w, double x, double y, double z);
  static UnitQuaternion normalized(const Eigen::Vector4d& v);

  /// Accepts components that are already unit length (|norm - 1| <= 1e-9)
  /// without touching their bits; used when reading stored poses.
  static UnitQuaternion from_unit(double w, double x, double y, double z);

  /// Rotation of `angle` radians about the unit `axis`.
  static UnitQuaternion from_axis_angle(const Eigen::Vector3d& axis, double angle);

  double w() const { return c_[0]; }
  double x() const { return c_[1]; }
  double y() const { return c_[2]; }
  double z() const { return c_[3]; }
  const std::array<double, 4>& components() const { return c_; }
  Eigen::Vector4d vector() const { return {c_[0], c_[1], c_[2], c_[3]}; }

  UnitQuaternion operator-() const;
  /// Hamilton product, renormalized.
  UnitQuaternion operator*(const UnitQuaternion& rhs) const;

  double dot(const UnitQuaternion& rhs) const;

  /// Representative with the first nonzero component positive.
  UnitQuaternion sign_canonical() const;

  bool operator==(const UnitQuaternion& rhs) const = default;

 private:
  UnitQuaternion(double w, double x, double y, double z) : c_{w, x, y, z} {}
  std::array<double, 4> c_{1.0, 0.0, 0.0, 0.0};
};

UnitQuaternion normalize(double w, double x, double y, double z);

/// One sample of SO(3)^K: K joint rotations, each relative to its parent.
class Pose {
 public:
  Pose() = default;
  explicit Pose(std::vector<UnitQuaternion> joints) : joints_(std::move(joints)) {}

  /// K identity rotations.
  static Pose identity(std::size_t k);

  /// Normalizes each consecutive 4-vector of `ambient` (length 4K).
  static Pose from_ambient(const Eigen::Ref<const Eigen::VectorXd>& ambient);

  std::size_t size() const { return joints_.size(); }
  const UnitQuaternion& operator[](std::size_t k) const { return joints_[k]; }
  UnitQuaternion& operator[](std::size_t k) { return joints_[k]; }
  const std::vector<UnitQuaternion>& joints() const { return joints_; }

  /// Flattened (w, x, y, z) per joint, length 4K.
  Eigen::VectorXd ambient() const;

  /// Negates every joint quaternion.
  Pose flipped() const;

  bool operator==(const Pose& rhs) const = default;

 private:
  std::vector<UnitQuaternion> joints_;
};

/// arccos(|q.r|) in [0, pi/2], evaluated as a half-angle atan2 so that equal
/// or antipodal quaternions give exactly 0.
double joint_geodesic(const UnitQuaternion& q, const UnitQuaternion& r);

/// sqrt(sum_i (w_i / 2) * joint_geodesic(a_i, b_i)^2). Weights are used as
/// given (not normalized).
double pose_distance(const Pose& a, const Pose& b, const SkeletonTopology& skel);

/// Uniform on S^3 via a normalized 4D standard normal.
UnitQuaternion random_unit_quaternion(Rng& rng);

/// K i.i.d. uniform joint rotations.
Pose random_pose(std::size_t k, Rng& rng);

/// Each joint, with probability `joint_prob`, is right-multiplied by a
/// rotation about a uniform random axis whose geodesic size is
/// |N(0, sigma^2)| (the rotation angle is twice that), so joint_geodesic
/// between input and output equals the drawn magnitude.
Pose perturb_pose(const Pose& pose, double sigma, double joint_prob, Rng& rng);

/// Deterministic child seed for stream `index` derived from `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace posendf
