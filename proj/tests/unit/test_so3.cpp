#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "posendf/error.hpp"
#include "posendf/so3.hpp"
#include "support.hpp"

using namespace posendf;

TEST(UnitQuaternion, NormalizesScaledIdentity) {
  const auto q = UnitQuaternion::normalized(2, 0, 0, 0);
  EXPECT_EQ(q, UnitQuaternion::identity());
  EXPECT_EQ(UnitQuaternion::normalized(1, 0, 0, 0), UnitQuaternion::identity());
}

TEST(UnitQuaternion, NormalizesOnes) {
  const auto q = UnitQuaternion::normalized(1, 1, 1, 1);
  for (double c : q.components()) EXPECT_DOUBLE_EQ(c, 0.5);
}

TEST(UnitQuaternion, RejectsDegenerate) {
  EXPECT_THROW(UnitQuaternion::normalized(0, 0, 0, 0), DegenerateQuaternion);
  EXPECT_THROW(UnitQuaternion::normalized(1e-13, 0, 0, 0), DegenerateQuaternion);
  EXPECT_THROW(UnitQuaternion::from_unit(0.9, 0, 0, 0), DegenerateQuaternion);
}

TEST(UnitQuaternion, HamiltonProductMatchesEigen) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_unit_quaternion(rng);
    const auto b = random_unit_quaternion(rng);
    const Eigen::Quaterniond e = test::to_eigen(a) * test::to_eigen(b);
    const auto c = a * b;
    EXPECT_NEAR(c.w(), e.w(), 1e-14);
    EXPECT_NEAR(c.x(), e.x(), 1e-14);
    EXPECT_NEAR(c.y(), e.y(), 1e-14);
    EXPECT_NEAR(c.z(), e.z(), 1e-14);
  }
}

TEST(JointGeodesic, ZeroForEqualAndAntipodal) {
  Rng rng(1);
  const auto q = random_unit_quaternion(rng);
  EXPECT_EQ(joint_geodesic(q, q), 0.0);
  EXPECT_EQ(joint_geodesic(q, -q), 0.0);
}

TEST(JointGeodesic, QuarterTurnAboutZ) {
  const double h = std::numbers::pi / 4;
  const auto r = UnitQuaternion::normalized(std::cos(h), 0, 0, std::sin(h));
  EXPECT_NEAR(joint_geodesic(UnitQuaternion::identity(), r), 0.78539816339744831, 1e-12);
}

TEST(JointGeodesic, MatchesRotationMatrixAngle) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto q = random_unit_quaternion(rng);
    const auto r = random_unit_quaternion(rng);
    EXPECT_NEAR(joint_geodesic(q, r), test::half_angle_oracle(q, r), 1e-7);
  }
}

TEST(JointGeodesic, BiInvariant) {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const auto g = random_unit_quaternion(rng);
    const auto q = random_unit_quaternion(rng);
    const auto r = random_unit_quaternion(rng);
    EXPECT_NEAR(joint_geodesic(g * q, g * r), joint_geodesic(q, r), 1e-9);
    EXPECT_NEAR(joint_geodesic(q * g, r * g), joint_geodesic(q, r), 1e-9);
  }
}

TEST(PoseDistance, SingleJointQuarterTurn) {
  const SkeletonTopology skel({std::nullopt}, {Eigen::Vector3d::Zero()}, {1.0});
  const double h = std::numbers::pi / 4;
  const Pose b({UnitQuaternion::normalized(std::cos(h), 0, 0, std::sin(h))});
  const double expected = std::sqrt(0.5 * (std::numbers::pi / 4) * (std::numbers::pi / 4));
  EXPECT_NEAR(pose_distance(Pose::identity(1), b, skel), expected, 1e-12);
  EXPECT_NEAR(expected, 0.55536, 1e-5);
}

TEST(PoseDistance, ZeroOnEqualAndFlipped) {
  Rng rng(2);
  const auto skel = SkeletonTopology::binary_tree(6);
  const Pose a = random_pose(6, rng);
  EXPECT_EQ(pose_distance(a, a, skel), 0.0);
  EXPECT_EQ(pose_distance(a, a.flipped(), skel), 0.0);
}

TEST(PoseDistance, DimensionMismatch) {
  const auto skel = SkeletonTopology::binary_tree(3);
  EXPECT_THROW(pose_distance(Pose::identity(3), Pose::identity(2), skel), DimensionMismatch);
}

TEST(PoseDistance, MetricAxiomsOnRandomTriples) {
  Rng rng(11);
  const auto skel = SkeletonTopology::binary_tree(5);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 10000; ++i) {
    const Pose a = random_pose(5, rng);
    const Pose b = random_pose(5, rng);
    const Pose c = random_pose(5, rng);
    const double ab = pose_distance(a, b, skel);
    EXPECT_EQ(ab, pose_distance(b, a, skel));
    EXPECT_LE(pose_distance(a, c, skel), ab + pose_distance(b, c, skel) + 1e-9);
    // Flipping any subset of joints leaves the distance within 1e-12.
    Pose f = b;
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (coin(rng)) f[j] = -f[j];
    }
    EXPECT_NEAR(pose_distance(a, f, skel), ab, 1e-12);
  }
}

TEST(RandomPose, DeterministicAndUnit) {
  Rng r1(42), r2(42);
  const Pose a = random_pose(4, r1);
  EXPECT_EQ(a, random_pose(4, r2));
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j].vector().norm(), 1.0, 1e-12);
}

TEST(RandomPose, ComponentMeansNearZero) {
  Rng rng(7);
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  const int n = 10000;
  for (int i = 0; i < n; ++i) mean += random_unit_quaternion(rng).vector();
  mean /= n;
  for (int c = 0; c < 4; ++c) EXPECT_LE(std::abs(mean[c]), 0.05);
}

TEST(PerturbPose, ZeroSigmaOrProbabilityIsIdentity) {
  Rng rng(8);
  const Pose p = random_pose(5, rng);
  EXPECT_EQ(perturb_pose(p, 0.0, 1.0, rng), p);
  EXPECT_EQ(perturb_pose(p, 0.7, 0.0, rng), p);
}

TEST(PerturbPose, MeanGeodesicIsHalfNormalMean) {
  Rng rng(13);
  double sum = 0.0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const Pose p = random_pose(1, rng);
    sum += joint_geodesic(p[0], perturb_pose(p, 0.5, 1.0, rng)[0]);
  }
  EXPECT_NEAR(sum / n, 0.5 * std::sqrt(2.0 / std::numbers::pi), 0.02);
}

TEST(PerturbPose, DistanceScalesLinearlyForSmallSigma) {
  const auto skel = SkeletonTopology::binary_tree(4);
  const Pose p = Pose::identity(4);
  // Same stream for both scales: the drawn directions coincide and only the
  // magnitudes scale.
  Rng r1(21), r2(21);
  const double d1 = pose_distance(p, perturb_pose(p, 1e-4, 1.0, r1), skel);
  const double d2 = pose_distance(p, perturb_pose(p, 2e-4, 1.0, r2), skel);
  EXPECT_NEAR(d2 / d1, 2.0, 1e-6);
}

TEST(DeriveSeed, DistinctStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}
