#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "posendf/error.hpp"
#include "posendf/field_model.hpp"
#include "posendf/projector.hpp"
#include "posendf/skeleton.hpp"
#include "posendf/so3.hpp"

namespace posendf {

struct MotionSequence {
  std::vector<Pose> frames;
  std::vector<std::size_t> indices;  // source frame indices; may be empty

  std::size_t size() const { return frames.size(); }
  /// Non-empty with a uniform joint count.
  void validate() const;
};

/// Weights of the per-frame objective
///   lambda_v |FK(x) - obs|^2 + w_prior f(x)^2 + lambda_t |FK(x) - FK(prev)|^2,
/// where the prior weight adapts as lambda_theta = w_prior * f(x).
struct DenoiseConfig {
  double lambda_v = 1.0;
  double w_prior = 10.0;
  double lambda_t = 0.5;
  double lr = 1e-2;
  std::size_t steps = 300;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Per-joint flag: true when the joint is observed.
struct OcclusionMask {
  std::vector<bool> observed;

  std::size_t size() const { return observed.size(); }
  std::size_t num_observed() const;
};

/// Frame-by-frame optimization; frame t's temporal term refers to the
/// already-solved frame t-1 and frame 0 has none. Each frame starts from the
/// input pose, takes Adam steps on ambient coordinates with per-joint
/// renormalization, and keeps the iterate with the lowest objective.
MotionSequence denoise(
    const MotionSequence& seq,
    const std::vector<JointPositions>& observations,
    const DifferentiableField& prior,
    const SkeletonTopology& skel,
    const DenoiseConfig& cfg);

MotionSequence denoise(
    const MotionSequence& seq,
    const std::vector<JointPositions>& observations,
    const FieldModel& model,
    const DenoiseConfig& cfg);

/// Optimizes only the occluded joints' rotations. The data term covers the
/// observed joints' positions, the prior the whole pose; observed joints
/// keep the rotations they have in `init`. Temporal weight is unused.
Pose fit_partial(
    const JointPositions& frame_obs,
    const OcclusionMask& mask,
    const Pose& init,
    const DifferentiableField& prior,
    const SkeletonTopology& skel,
    const DenoiseConfig& cfg);

Pose fit_partial(
    const JointPositions& frame_obs,
    const OcclusionMask& mask,
    const Pose& init,
    const FieldModel& model,
    const DenoiseConfig& cfg);

/// `base` with every occluded joint replaced by a small random rotation
/// (identity perturbed with geodesic scale `sigma`).
Pose occluded_initialization(const Pose& base, const OcclusionMask& mask, Rng& rng, double sigma = 0.05);

struct InterpolationConfig {
  double tau = 0.1;
  double tol = 1e-2;  // pose distance at which the end pose counts as reached
  std::size_t max_frames = 200;
  ProjectionConfig projection;

  void validate() const;
};

struct InterpolationResult {
  MotionSequence sequence;
  bool converged = false;  // false: frame budget exhausted or a step failed to approach the end
};

/// Projects both endpoints, then repeatedly blends the current frame toward
/// the projected end (x + tau (end - x) per joint 4-vector, with the end
/// quaternion taken in the current one's hemisphere), renormalizes and
/// projects. Stops when the pose distance to the projected end drops below
/// tol; the sequence always starts with the projected start and ends with
/// the projected end.
InterpolationResult interpolate(
    const Pose& start,
    const Pose& end,
    const DifferentiableField& field,
    const SkeletonTopology& skel,
    const InterpolationConfig& cfg);

class SamplingError : public Error {
 public:
  SamplingError(const std::string& what, std::vector<Pose> partial)
      : Error(what), partial_(std::move(partial)) {}
  const std::vector<Pose>& partial() const { return partial_; }

 private:
  std::vector<Pose> partial_;
};

/// n projections of uniform random poses. Sample i draws from its own
/// stream derive_seed(seed, i) and retries up to `max_attempts` times until
/// the projected value is below cfg.tol.
std::vector<Pose> sample_poses(
    const DifferentiableField& field,
    std::size_t n,
    const ProjectionConfig& cfg,
    std::uint64_t seed,
    std::size_t max_attempts = 10,
    unsigned threads = 1);

/// Mean over unordered pairs of the mean joint distance between their
/// forward-kinematics positions.
double apd(const std::vector<Pose>& samples, const SkeletonTopology& skel);

struct SmoothnessStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

/// Statistics of the mean joint distance between consecutive frames.
SmoothnessStats smoothness(const MotionSequence& seq, const SkeletonTopology& skel);

}  // namespace posendf
