#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "posendf/manifold.hpp"
#include "posendf/skeleton.hpp"
#include "posendf/so3.hpp"

namespace posendf {

/// Softplus with sharpness beta: log(1 + exp(beta z)) / beta.
inline constexpr double kSoftplusBeta = 100.0;

/// Flat parameter storage. The aligned allocator pins each layer's offset to
/// the same SIMD alignment in every allocation, which keeps Eigen's kernels
/// (and so the rounding) identical between runs.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct ModelShape {
  std::size_t num_joints = 0;
  std::size_t feature_width = 6;    // per-joint encoder output width l
  std::size_t encoder_hidden = 32;  // hidden width inside each joint encoder
  std::size_t head_width = 256;     // hidden width of the distance head
  std::size_t head_layers = 5;      // affine layers in the distance head

  bool operator==(const ModelShape&) const = default;
};

/// One affine layer followed by softplus. Weights are stored column-major
/// (out x in) at `weight_offset`, biases (out) at `bias_offset`.
struct LayerInfo {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

/// f = head o encoder. Joint k owns a two-layer encoder fed with its
/// quaternion (root-level joints) or its quaternion concatenated with the
/// parent's feature; the features of all joints are concatenated and passed
/// through the head. Every affine layer, including the last, is followed by
/// softplus, so f >= 0.
///
/// Parameters live in one flat array in canonical order: for each joint in
/// index order its encoder layers, then the head layers; within a layer the
/// weight matrix (column-major) precedes the bias.
class FieldModel {
 public:
  FieldModel() = default;
  /// All parameters zero.
  FieldModel(SkeletonTopology skeleton, ModelShape shape);

  /// Uniform Glorot weights in [-s, s], s = sqrt(6 / (fan_in + fan_out));
  /// zero biases, including the final one, so the initial output is close
  /// to softplus(0).
  static FieldModel init(const SkeletonTopology& skeleton, ModelShape shape, std::uint64_t seed);

  const SkeletonTopology& skeleton() const { return skeleton_; }
  const ModelShape& shape() const { return shape_; }
  std::size_t num_joints() const { return shape_.num_joints; }

  std::size_t num_layers() const { return layers_.size(); }
  const LayerInfo& layer(std::size_t i) const { return layers_[i]; }
  std::size_t encoder_layer(std::size_t joint, std::size_t depth) const { return 2 * joint + depth; }
  std::size_t head_layer(std::size_t i) const { return 2 * shape_.num_joints + i; }

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t i) const;
  Eigen::Map<Eigen::MatrixXd> weight(std::size_t i);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t i) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t i);

  ParamVector& parameters() { return params_; }
  const ParamVector& parameters() const { return params_; }
  std::size_t num_parameters() const { return params_.size(); }

  bool operator==(const FieldModel& o) const {
    return skeleton_ == o.skeleton_ && shape_ == o.shape_ && params_ == o.params_;
  }

 private:
  SkeletonTopology skeleton_;
  ModelShape shape_;
  std::vector<LayerInfo> layers_;
  ParamVector params_;
};

FieldModel init_model(
    const SkeletonTopology& skeleton,
    std::size_t feature_width,
    std::size_t head_width,
    std::uint64_t seed);

/// Cached values of a batched forward pass, one column per input.
struct LayerTrace {
  Eigen::MatrixXd input;
  Eigen::MatrixXd pre;
  Eigen::MatrixXd post;
  Eigen::MatrixXd slope;  // softplus'(pre)
};

struct EvalTrace {
  std::vector<LayerTrace> layers;  // indexed like FieldModel layers
  Eigen::RowVectorXd values;

  std::size_t batch_size() const { return static_cast<std::size_t>(values.size()); }
};

/// Forward pass over a batch of ambient inputs (4K rows, one column per
/// input). Inputs need not be unit length. Throws NumericalError on
/// non-finite values.
EvalTrace forward_batch(const FieldModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

/// Column-wise input gradients df/dx (4K x B) by reverse mode over `trace`.
Eigen::MatrixXd input_gradient_batch(const FieldModel& model, const EvalTrace& trace);

struct ForwardResult {
  double value = 0.0;
  EvalTrace trace;
};

ForwardResult forward(const FieldModel& model, const Pose& pose);
double field_value(const FieldModel& model, const Eigen::Ref<const Eigen::VectorXd>& ambient);

/// Exact df/dx over the 4K ambient quaternion coordinates.
Eigen::VectorXd input_gradient(const FieldModel& model, const Pose& pose);
Eigen::VectorXd input_gradient(const FieldModel& model, const Eigen::Ref<const Eigen::VectorXd>& ambient);

struct LossResult {
  double udf = 0.0;      // sum |f - d|
  double eikonal = 0.0;  // sum over d != 0 of (|grad f| - 1)^2
  ParamVector grads;  // d(udf + lambda * eikonal) / d(parameters)
};

/// Losses and exact parameter gradients. The Eikonal part differentiates
/// the input gradient with respect to the parameters by propagating the
/// tangent u = dL_eik/d(grad f) forward through the network and running
/// reverse mode over the resulting dual computation.
LossResult loss_and_param_grads(
    const FieldModel& model, std::span<const LabeledPose> batch, double lambda_eik);

/// Same on ambient columns with labels.
LossResult loss_and_param_grads(
    const FieldModel& model,
    const Eigen::Ref<const Eigen::MatrixXd>& inputs,
    std::span<const double> labels,
    double lambda_eik);

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Binary checkpoint, little-endian:
///   "PNMD", u32 version, u32 K, u32 feature_width, u32 encoder_hidden,
///   u32 head_width, u32 head_layers,
///   K x i32 parent (-1 for root-level), K x 3 f64 offsets, K x f64 weights,
///   u64 parameter count, parameters as f64 in canonical order,
///   u32 CRC-32 of all preceding bytes.
void save_model(const FieldModel& model, const std::string& path);

/// Throws FormatError, VersionMismatch, TruncatedFile, ChecksumMismatch.
FieldModel load_model(const std::string& path);

/// Also checks the stored skeleton against `expected`; throws ShapeMismatch
/// when they disagree.
FieldModel load_model(const std::string& path, const SkeletonTopology& expected);

/// Stacks poses as ambient columns (4K x N).
Eigen::MatrixXd stack_ambient(std::span<const Pose> poses);

}  // namespace posendf
