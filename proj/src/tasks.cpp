#include "posendf/tasks.hpp"

#include <cmath>

#include "posendf/parallel.hpp"

namespace posendf {

void MotionSequence::validate() const {
  if (frames.empty()) throw ConfigError("motion sequence is empty");
  for (const auto& f : frames) {
    if (f.size() != frames.front().size()) throw DimensionMismatch("motion sequence mixes joint counts");
  }
  if (!indices.empty() && indices.size() != frames.size()) {
    throw DimensionMismatch("motion sequence: one index per frame required");
  }
}

void DenoiseConfig::validate() const {
  if (!(lambda_v >= 0.0) || !(w_prior >= 0.0) || !(lambda_t >= 0.0)) {
    throw ConfigError("denoise: weights must be non-negative");
  }
  if (!(lr > 0.0)) throw ConfigError("denoise: lr must be positive");
}

std::size_t OcclusionMask::num_observed() const {
  std::size_t n = 0;
  for (bool b : observed) n += b ? 1 : 0;
  return n;
}

namespace {

// Objective of one frame and its ambient gradient over the free joints.
struct FrameObjective {
  const SkeletonTopology& skel;
  const DifferentiableField& prior;
  const DenoiseConfig& cfg;
  const JointPositions& obs;
  const std::vector<bool>* data_joints;  // null: all joints carry data
  const JointPositions* prev;            // null: no temporal term

  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    const std::size_t k = skel.size();
    const JointPositions pos = forward_kinematics(x, skel);
    std::vector<Eigen::Vector3d> adj(k, Eigen::Vector3d::Zero());
    double loss = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (!data_joints || (*data_joints)[j]) {
        const Eigen::Vector3d r = pos[j] - obs[j];
        loss += cfg.lambda_v * r.squaredNorm();
        adj[j] += 2.0 * cfg.lambda_v * r;
      }
      if (prev && cfg.lambda_t > 0.0) {
        const Eigen::Vector3d r = pos[j] - (*prev)[j];
        loss += cfg.lambda_t * r.squaredNorm();
        adj[j] += 2.0 * cfg.lambda_t * r;
      }
    }
    grad = forward_kinematics_vjp(x, skel, adj);
    if (cfg.w_prior > 0.0) {
      auto [f, g] = prior.value_and_gradient(x);
      loss += cfg.w_prior * f * f;
      // Only the component tangent to each joint's sphere moves the pose.
      for (Eigen::Index i = 0; i < x.size(); i += 4) {
        const Eigen::Vector4d u = x.segment<4>(i).normalized();
        const Eigen::Vector4d gi = g.segment<4>(i);
        grad.segment<4>(i) += 2.0 * cfg.w_prior * f * (gi - u * u.dot(gi));
      }
    }
    if (!std::isfinite(loss) || !grad.allFinite()) throw NumericalError("denoise: objective diverged");
    return loss;
  }
};

// Adam on the free joints with renormalization after each step; returns
// the lowest-objective iterate.
Pose optimize_frame(const FrameObjective& obj, const Pose& init, const std::vector<bool>& free_joints) {
  const auto& cfg = obj.cfg;
  Eigen::VectorXd x = init.ambient();
  Eigen::VectorXd grad;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());
  Pose best = init;
  double best_loss = obj.evaluate(x, grad);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t j = 0; j < free_joints.size(); ++j) {
      if (!free_joints[j]) continue;
      const auto s = static_cast<Eigen::Index>(4 * j);
      for (Eigen::Index i = s; i < s + 4; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        x[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
      }
      const double n = x.segment<4>(s).norm();
      if (!(n > 1e-12)) throw DegenerateQuaternion("denoise: joint collapsed to zero norm");
      x.segment<4>(s) /= n;
    }
    const double loss = obj.evaluate(x, grad);
    if (loss < best_loss) {
      best_loss = loss;
      best = Pose::from_ambient(x);
      // Restore the untouched joints bit-for-bit.
      for (std::size_t j = 0; j < free_joints.size(); ++j) {
        if (!free_joints[j]) best[j] = init[j];
      }
    }
  }
  return best;
}

}  // namespace

MotionSequence denoise(
    const MotionSequence& seq,
    const std::vector<JointPositions>& observations,
    const DifferentiableField& prior,
    const SkeletonTopology& skel,
    const DenoiseConfig& cfg) {
  seq.validate();
  cfg.validate();
  if (observations.size() != seq.size()) {
    throw DimensionMismatch("denoise: one observation per frame required");
  }
  if (seq.frames.front().size() != skel.size() || prior.num_joints() != skel.size()) {
    throw DimensionMismatch("denoise: sequence, prior and skeleton disagree on K");
  }
  for (const auto& o : observations) {
    if (o.size() != skel.size()) throw DimensionMismatch("denoise: observation has wrong joint count");
  }
  const std::vector<bool> all_free(skel.size(), true);
  MotionSequence out;
  out.indices = seq.indices;
  JointPositions prev_positions;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const FrameObjective obj{skel, prior, cfg, observations[t], nullptr, t > 0 ? &prev_positions : nullptr};
    out.frames.push_back(optimize_frame(obj, seq.frames[t], all_free));
    prev_positions = forward_kinematics(out.frames.back(), skel);
  }
  return out;
}

MotionSequence denoise(
    const MotionSequence& seq,
    const std::vector<JointPositions>& observations,
    const FieldModel& model,
    const DenoiseConfig& cfg) {
  return denoise(seq, observations, ModelField(model), model.skeleton(), cfg);
}

Pose fit_partial(
    const JointPositions& frame_obs,
    const OcclusionMask& mask,
    const Pose& init,
    const DifferentiableField& prior,
    const SkeletonTopology& skel,
    const DenoiseConfig& cfg) {
  cfg.validate();
  if (mask.size() != skel.size() || init.size() != skel.size() || frame_obs.size() != skel.size() ||
      prior.num_joints() != skel.size()) {
    throw DimensionMismatch("fit_partial: mask, pose, observation, prior and skeleton disagree on K");
  }
  if (mask.num_observed() == 0) throw ConfigError("fit_partial: at least one joint must be observed");
  if (mask.num_observed() == mask.size()) return init;
  std::vector<bool> free_joints(mask.size());
  for (std::size_t j = 0; j < mask.size(); ++j) free_joints[j] = !mask.observed[j];
  const FrameObjective obj{skel, prior, cfg, frame_obs, &mask.observed, nullptr};
  return optimize_frame(obj, init, free_joints);
}

Pose fit_partial(
    const JointPositions& frame_obs,
    const OcclusionMask& mask,
    const Pose& init,
    const FieldModel& model,
    const DenoiseConfig& cfg) {
  return fit_partial(frame_obs, mask, init, ModelField(model), model.skeleton(), cfg);
}

Pose occluded_initialization(const Pose& base, const OcclusionMask& mask, Rng& rng, double sigma) {
  if (mask.size() != base.size()) throw DimensionMismatch("occluded_initialization: mask size mismatch");
  Pose out = base;
  const Pose near_identity = perturb_pose(Pose::identity(base.size()), sigma, 1.0, rng);
  for (std::size_t j = 0; j < base.size(); ++j) {
    if (!mask.observed[j]) out[j] = near_identity[j];
  }
  return out;
}

void InterpolationConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("interpolate: tau must lie in (0, 1]");
  if (!(tol >= 0.0)) throw ConfigError("interpolate: tol must be non-negative");
  if (max_frames < 2) throw ConfigError("interpolate: max_frames must be at least 2");
  projection.validate();
}

InterpolationResult interpolate(
    const Pose& start,
    const Pose& end,
    const DifferentiableField& field,
    const SkeletonTopology& skel,
    const InterpolationConfig& cfg) {
  cfg.validate();
  if (start.size() != skel.size() || end.size() != skel.size()) {
    throw DimensionMismatch("interpolate: endpoints do not match skeleton");
  }
  const Pose first = project(field, start, cfg.projection).pose;
  const Pose last = project(field, end, cfg.projection).pose;
  InterpolationResult out;
  out.sequence.frames.push_back(first);
  Pose current = first;
  double remaining = pose_distance(current, last, skel);
  out.converged = remaining < cfg.tol;
  while (!out.converged) {
    if (out.sequence.frames.size() + 1 >= cfg.max_frames) break;
    Eigen::VectorXd x = current.ambient();
    for (std::size_t j = 0; j < skel.size(); ++j) {
      const auto s = static_cast<Eigen::Index>(4 * j);
      Eigen::Vector4d target = last[j].vector();
      if (target.dot(x.segment<4>(s)) < 0.0) target = -target;
      x.segment<4>(s) += cfg.tau * (target - x.segment<4>(s));
    }
    const Pose blended = Pose::from_ambient(x);
    const Pose next = project(field, blended, cfg.projection).pose;
    const double d = pose_distance(next, last, skel);
    if (d < cfg.tol) {
      out.converged = true;
      break;
    }
    if (!(d < remaining)) break;  // the step did not approach the end pose
    out.sequence.frames.push_back(next);
    current = next;
    remaining = d;
  }
  out.sequence.frames.push_back(last);
  return out;
}

std::vector<Pose> sample_poses(
    const DifferentiableField& field,
    std::size_t n,
    const ProjectionConfig& cfg,
    std::uint64_t seed,
    std::size_t max_attempts,
    unsigned threads) {
  if (n == 0) throw ConfigError("sample_poses: n must be at least 1");
  if (max_attempts == 0) throw ConfigError("sample_poses: max_attempts must be at least 1");
  cfg.validate();
  std::vector<std::optional<Pose>> slots(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    for (std::size_t a = 0; a < max_attempts; ++a) {
      const Pose start = random_pose(field.num_joints(), rng);
      try {
        ProjectionResult r = project(field, start, cfg);
        if (r.value < cfg.tol) {
          slots[i] = std::move(r.pose);
          return;
        }
      } catch (const DegenerateQuaternion&) {
        // rejected; draw again
      }
    }
  });
  std::vector<Pose> accepted;
  accepted.reserve(n);
  for (auto& s : slots) {
    if (s) accepted.push_back(std::move(*s));
  }
  if (accepted.size() != n) {
    throw SamplingError(
        "sample_poses: " + std::to_string(n - accepted.size()) + " of " + std::to_string(n) +
            " samples exhausted the retry budget",
        std::move(accepted));
  }
  return accepted;
}

double apd(const std::vector<Pose>& samples, const SkeletonTopology& skel) {
  if (samples.size() < 2) throw ConfigError("apd: at least two samples required");
  std::vector<JointPositions> fk;
  fk.reserve(samples.size());
  for (const auto& p : samples) fk.push_back(forward_kinematics(p, skel));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < fk.size(); ++i) {
    for (std::size_t j = i + 1; j < fk.size(); ++j) {
      sum += mean_joint_distance(fk[i], fk[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

SmoothnessStats smoothness(const MotionSequence& seq, const SkeletonTopology& skel) {
  if (seq.size() < 2) throw ConfigError("smoothness: at least two frames required");
  std::vector<double> steps;
  steps.reserve(seq.size() - 1);
  JointPositions prev = forward_kinematics(seq.frames[0], skel);
  for (std::size_t t = 1; t < seq.size(); ++t) {
    JointPositions cur = forward_kinematics(seq.frames[t], skel);
    steps.push_back(mean_joint_distance(prev, cur));
    prev = std::move(cur);
  }
  SmoothnessStats s;
  for (double d : steps) s.mean += d;
  s.mean /= static_cast<double>(steps.size());
  for (double d : steps) s.stddev += (d - s.mean) * (d - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(steps.size()));
  return s;
}

}  // namespace posendf
