#include "posendf/so3.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "posendf/error.hpp"

namespace posendf {

namespace {

constexpr double kMinNorm = 1e-12;
constexpr double kUnitTolerance = 1e-9;

}  // namespace

UnitQuaternion UnitQuaternion::normalized(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > kMinNorm) || !std::isfinite(n)) {
    throw DegenerateQuaternion("cannot normalize quaternion with norm " + std::to_string(n));
  }
  return {w / n, x / n, y / n, z / n};
}

UnitQuaternion UnitQuaternion::normalized(const Eigen::Vector4d& v) {
  return normalized(v[0], v[1], v[2], v[3]);
}

UnitQuaternion UnitQuaternion::from_unit(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(std::abs(n - 1.0) <= kUnitTolerance)) {
    throw DegenerateQuaternion("quaternion is not unit length (norm " + std::to_string(n) + ")");
  }
  return {w, x, y, z};
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Eigen::Vector3d& axis, double angle) {
  const double s = std::sin(0.5 * angle);
  const Eigen::Vector3d a = axis.normalized();
  return normalized(std::cos(0.5 * angle), s * a.x(), s * a.y(), s * a.z());
}

UnitQuaternion UnitQuaternion::operator-() const {
  return {-c_[0], -c_[1], -c_[2], -c_[3]};
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& r) const {
  const auto& a = c_;
  const auto& b = r.c_;
  return normalized(
      a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
      a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
      a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
      a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

double UnitQuaternion::dot(const UnitQuaternion& r) const {
  return c_[0] * r.c_[0] + c_[1] * r.c_[1] + c_[2] * r.c_[2] + c_[3] * r.c_[3];
}

UnitQuaternion UnitQuaternion::sign_canonical() const {
  for (double v : c_) {
    if (v > 0.0) return *this;
    if (v < 0.0) return -*this;
  }
  return *this;
}

UnitQuaternion normalize(double w, double x, double y, double z) {
  return UnitQuaternion::normalized(w, x, y, z);
}

Pose Pose::identity(std::size_t k) {
  return Pose(std::vector<UnitQuaternion>(k));
}

Pose Pose::from_ambient(const Eigen::Ref<const Eigen::VectorXd>& ambient) {
  if (ambient.size() % 4 != 0) {
    throw DimensionMismatch("ambient pose length must be a multiple of 4");
  }
  std::vector<UnitQuaternion> joints;
  joints.reserve(static_cast<std::size_t>(ambient.size() / 4));
  for (Eigen::Index i = 0; i < ambient.size(); i += 4) {
    joints.push_back(UnitQuaternion::normalized(
        ambient[i], ambient[i + 1], ambient[i + 2], ambient[i + 3]));
  }
  return Pose(std::move(joints));
}

Eigen::VectorXd Pose::ambient() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(4 * joints_.size()));
  for (std::size_t k = 0; k < joints_.size(); ++k) {
    const auto& c = joints_[k].components();
    for (int j = 0; j < 4; ++j) v[static_cast<Eigen::Index>(4 * k) + j] = c[j];
  }
  return v;
}

Pose Pose::flipped() const {
  std::vector<UnitQuaternion> out;
  out.reserve(joints_.size());
  for (const auto& q : joints_) out.push_back(-q);
  return Pose(std::move(out));
}

// 2*atan2(|q - s r|, |q + s r|) with s = sign(q.r) equals arccos|q.r| but
// stays accurate near zero, where arccos loses half the digits.
double joint_geodesic(const UnitQuaternion& q, const UnitQuaternion& r) {
  const Eigen::Vector4d a = q.vector();
  const Eigen::Vector4d b = a.dot(r.vector()) < 0.0 ? Eigen::Vector4d(-r.vector()) : r.vector();
  return 2.0 * std::atan2((a - b).norm(), (a + b).norm());
}

double pose_distance(const Pose& a, const Pose& b, const SkeletonTopology& skel) {
  if (a.size() != skel.size() || b.size() != skel.size()) {
    throw DimensionMismatch(
        "pose_distance: poses have " + std::to_string(a.size()) + " and " +
        std::to_string(b.size()) + " joints, skeleton has " + std::to_string(skel.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double g = joint_geodesic(a[i], b[i]);
    sum += 0.5 * skel.weight(i) * g * g;
  }
  return std::sqrt(sum);
}

UnitQuaternion random_unit_quaternion(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const double w = normal(rng);
    const double x = normal(rng);
    const double y = normal(rng);
    const double z = normal(rng);
    if (w * w + x * x + y * y + z * z > 1e-12) return UnitQuaternion::normalized(w, x, y, z);
  }
}

Pose random_pose(std::size_t k, Rng& rng) {
  if (k == 0) throw DimensionMismatch("random_pose: K must be at least 1");
  std::vector<UnitQuaternion> joints;
  joints.reserve(k);
  for (std::size_t i = 0; i < k; ++i) joints.push_back(random_unit_quaternion(rng));
  return Pose(std::move(joints));
}

Pose perturb_pose(const Pose& pose, double sigma, double joint_prob, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("perturb_pose: sigma must be non-negative");
  if (!(joint_prob >= 0.0 && joint_prob <= 1.0)) {
    throw ConfigError("perturb_pose: joint_prob must lie in [0, 1]");
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Pose out = pose;
  for (std::size_t k = 0; k < pose.size(); ++k) {
    if (!(uniform(rng) < joint_prob)) continue;
    const double magnitude = std::abs(sigma * normal(rng));
    Eigen::Vector3d axis;
    do {
      axis = {normal(rng), normal(rng), normal(rng)};
    } while (axis.squaredNorm() < 1e-12);
    axis.normalize();
    if (magnitude == 0.0) continue;
    out[k] = pose[k] * UnitQuaternion::from_axis_angle(axis, 2.0 * magnitude);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over a mix of both inputs
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace posendf
