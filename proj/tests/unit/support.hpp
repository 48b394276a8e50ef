#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include <Eigen/Geometry>

#include "posendf/field_model.hpp"
#include "posendf/projector.hpp"
#include "posendf/skeleton.hpp"
#include "posendf/so3.hpp"

namespace posendf::test {

// Unique scratch path under the system temp directory.
inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "posendf_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

inline Eigen::Quaterniond to_eigen(const UnitQuaternion& q) { return {q.w(), q.x(), q.y(), q.z()}; }

// Half the rotation angle between q and r, from their rotation matrices.
inline double half_angle_oracle(const UnitQuaternion& q, const UnitQuaternion& r) {
  const Eigen::Matrix3d rel = to_eigen(q).toRotationMatrix().transpose() * to_eigen(r).toRotationMatrix();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) / 2.0;
}

// Forward kinematics through Eigen's quaternion type.
inline std::vector<Eigen::Vector3d> fk_oracle(const Pose& pose, const SkeletonTopology& skel) {
  std::vector<Eigen::Vector3d> pos(skel.size());
  std::vector<Eigen::Quaterniond> global(skel.size());
  for (std::size_t j = 0; j < skel.size(); ++j) {
    const Eigen::Quaterniond local = to_eigen(pose[j]).normalized();
    if (const auto& p = skel.parent(j)) {
      pos[j] = pos[*p] + global[*p] * skel.offset(j);
      global[j] = global[*p] * local;
    } else {
      pos[j] = skel.offset(j);
      global[j] = local;
    }
  }
  return pos;
}

// Relative error with a floor so near-zero references do not blow up.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// A small model with random (not Glorot-scaled) biases so that every layer
// is away from softplus saturation.
inline FieldModel small_model(std::size_t k, std::uint64_t seed, std::size_t head_width = 16) {
  ModelShape shape;
  shape.num_joints = k;
  shape.feature_width = 3;
  shape.encoder_hidden = 5;
  shape.head_width = head_width;
  shape.head_layers = 3;
  FieldModel m = FieldModel::init(SkeletonTopology::binary_tree(k), shape, seed);
  Rng rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  for (std::size_t i = 0; i < m.num_layers(); ++i) {
    for (Eigen::Index r = 0; r < m.bias(i).size(); ++r) m.bias(i)[r] = u(rng);
  }
  return m;
}


// f = c everywhere with zero gradient; c = 0 makes projection the identity.
class ConstantField final : public DifferentiableField {
 public:
  ConstantField(std::size_t k, double c) : k_(k), c_(c) {}
  std::size_t num_joints() const override { return k_; }
  double value(const Eigen::VectorXd&) const override { return c_; }
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const override { return Eigen::VectorXd::Zero(x.size()); }
  using DifferentiableField::value;

 private:
  std::size_t k_;
  double c_;
};

}  // namespace posendf::test
