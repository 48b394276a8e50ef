#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "posendf/skeleton.hpp"
#include "posendf/so3.hpp"

namespace posendf {

/// Smooth synthetic pose manifold parameterized by a latent u in [0,1]^m.
/// Joint k rotates by a_k(u) = c_k + sum_j A_kj sin(w_kj u_j + phi_kj)
/// radians about a fixed axis; a_k is clamped to [lo_k, hi_k].
struct SyntheticManifoldSpec {
  std::size_t num_joints = 0;
  std::size_t latent_dim = 2;
  std::uint64_t seed = 0;
  std::vector<Eigen::Vector3d> axes;
  std::vector<double> center;
  Eigen::MatrixXd amplitude;  // K x m
  Eigen::MatrixXd frequency;  // K x m
  Eigen::MatrixXd phase;      // K x m
  std::vector<double> lo;
  std::vector<double> hi;

  /// Draws bounded coefficients from `seed`; lo/hi are set to the exact
  /// range c_k +- sum_j |A_kj| so the clamp never binds.
  static SyntheticManifoldSpec random(std::size_t num_joints, std::size_t latent_dim, std::uint64_t seed);

  void validate() const;
  std::vector<double> angles(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  Pose pose_at(const Eigen::Ref<const Eigen::VectorXd>& u) const;
};

std::string manifold_spec_to_json(const SyntheticManifoldSpec& spec);
/// Accepts either the full coefficient form or the short generator form
/// {"num_joints": K, "latent_dim": m, "seed": s}.
SyntheticManifoldSpec manifold_spec_from_json(const std::string& text);
SyntheticManifoldSpec load_manifold_spec(const std::string& path);
void save_manifold_spec(const SyntheticManifoldSpec& spec, const std::string& path);
/// FNV-1a over the canonical JSON form.
std::uint64_t manifold_spec_hash(const SyntheticManifoldSpec& spec);

/// n poses from i.i.d. uniform latents.
std::vector<Pose> sample_manifold(const SyntheticManifoldSpec& spec, std::size_t n, Rng& rng);

enum class Tier : std::uint8_t { manifold = 0, far = 1, mid = 2, near = 3 };

inline constexpr std::array<Tier, 4> kAllTiers{Tier::manifold, Tier::far, Tier::mid, Tier::near};

std::string_view tier_name(Tier tier);
Tier tier_from_name(std::string_view name);

/// Default noise scales for the three off-manifold tiers.
struct TierSigmas {
  double far = 0.8;
  double mid = 0.4;
  double near = 0.15;
};

/// Bucket a noise scale into far / mid / near using midpoints between the
/// default tier sigmas.
Tier tier_for_sigma(double sigma);

struct TieredPose {
  Pose pose;
  Tier tier = Tier::near;
  double sigma = 0.0;
};

/// For each sigma, `per_sigma` perturbations of uniformly chosen manifold
/// poses, in sigma order.
std::vector<TieredPose> build_negatives(
    const std::vector<Pose>& manifold,
    std::span<const double> sigmas,
    std::size_t per_sigma,
    Rng& rng,
    double joint_prob = 0.5);

/// Neighbour with its pose-metric distance; ties are ordered by index.
struct Neighbor {
  double distance = 0.0;
  std::size_t index = 0;
  auto operator<=>(const Neighbor&) const = default;
};

/// Two-stage kNN labeler. An exhaustive scan scores every manifold pose by
/// sum_j w_j (1 - |q_j . r_j|), the squared chordal distance with per-joint
/// sign alignment, and keeps the kprime lowest. Those are re-ranked with the
/// weighted geodesic pose metric.
class KnnLabeler {
 public:
  KnnLabeler(const std::vector<Pose>& manifold, const SkeletonTopology& skel);

  std::size_t size() const { return poses_.size(); }

  /// Indices of the kprime closest manifold poses under the prefilter
  /// score, closest first.
  std::vector<std::size_t> prefilter(const Pose& query, std::size_t kprime) const;

  /// Mean of the k smallest geodesic distances among the prefiltered set.
  double label(const Pose& query, std::size_t kprime, std::size_t k) const;

  std::vector<double> label_all(
      const std::vector<Pose>& queries, std::size_t kprime, std::size_t k, unsigned threads = 1) const;

 private:
  const std::vector<Pose>& poses_;
  const SkeletonTopology& skel_;
  std::size_t dim_;
  std::vector<double> coords_;  // sqrt(w_j)-scaled quaternions, row per pose
};

double knn_label(
    const Pose& query,
    const std::vector<Pose>& manifold,
    std::size_t kprime,
    std::size_t k,
    const SkeletonTopology& skel);

/// Brute-force mean of the k smallest geodesic distances over the whole set.
double exact_label(
    const Pose& query, const std::vector<Pose>& manifold, std::size_t k, const SkeletonTopology& skel);

/// Dense latent grid over [0,1]^m with `resolution` points per axis
/// (u_i = i / (resolution - 1)); distance() is the minimum pose distance to
/// the grid poses.
class OracleGrid {
 public:
  OracleGrid(const SyntheticManifoldSpec& spec, std::size_t resolution, const SkeletonTopology& skel);

  double distance(const Pose& query) const;
  std::size_t size() const { return poses_.size(); }
  const std::vector<Pose>& poses() const { return poses_; }

 private:
  const SkeletonTopology& skel_;
  std::vector<Pose> poses_;
};

double oracle_manifold_distance(
    const Pose& query,
    const SyntheticManifoldSpec& spec,
    std::size_t resolution,
    const SkeletonTopology& skel);

struct LabeledPose {
  Pose pose;
  double distance = 0.0;
  Tier tier = Tier::manifold;

  bool operator==(const LabeledPose&) const = default;
};

struct DatasetMetadata {
  std::uint64_t seed = 0;
  std::uint64_t spec_hash = 0;
  std::array<std::size_t, 4> tier_counts{};  // indexed by Tier

  bool operator==(const DatasetMetadata&) const = default;
};

struct PoseDataset {
  SkeletonTopology skeleton;
  std::vector<LabeledPose> samples;
  DatasetMetadata metadata;

  /// Recomputes metadata.tier_counts from the samples.
  void refresh_counts();
  /// Checks pose sizes, tier/label consistency and metadata counts.
  void validate() const;

  bool operator==(const PoseDataset&) const = default;
};

}  // namespace posendf
