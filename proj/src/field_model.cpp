#include "posendf/field_model.hpp"

#include <array>
#include <cmath>
#include <cstring>

#include "binary_io.hpp"
#include "posendf/error.hpp"

namespace posendf {

namespace {

using Matrix = Eigen::MatrixXd;
using Array = Eigen::ArrayXXd;

// Softplus and its slope sigmoid(beta z), sharing one exponential.
void softplus_with_slope(const Matrix& z, Matrix& value, Matrix& slope) {
  const Array bz = kSoftplusBeta * z.array();
  const Array e = (-bz.abs()).exp();
  const Array inv = (1.0 + e).inverse();
  value = ((bz.max(0.0) + e.log1p()) / kSoftplusBeta).matrix();
  slope = (bz >= 0.0).select(inv, e * inv).matrix();
}

void apply_layer(const FieldModel& m, std::size_t li, LayerTrace& t) {
  t.pre.noalias() = m.weight(li) * t.input;
  t.pre.colwise() += m.bias(li);
  softplus_with_slope(t.pre, t.post, t.slope);
}

// Tangent (directional derivative) quantities carried next to a trace.
struct TangentLayer {
  Matrix input;
  Matrix pre;
};

struct TangentTrace {
  std::vector<TangentLayer> layers;
};

void check_input_rows(const FieldModel& m, Eigen::Index rows) {
  if (rows != static_cast<Eigen::Index>(4 * m.num_joints())) {
    throw DimensionMismatch(
        "field model expects " + std::to_string(4 * m.num_joints()) + " inputs, got " +
        std::to_string(rows));
  }
}

// Tangent propagation of direction `dirs` (4K x B) through a recorded trace.
TangentTrace tangent_forward(const FieldModel& m, const EvalTrace& trace, const Matrix& dirs) {
  const std::size_t k = m.num_joints();
  const auto l = static_cast<Eigen::Index>(m.shape().feature_width);
  const Eigen::Index b = dirs.cols();
  TangentTrace out;
  out.layers.resize(m.num_layers());
  std::vector<Matrix> feature_dot(k);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t l0 = m.encoder_layer(j, 0);
    const std::size_t l1 = m.encoder_layer(j, 1);
    auto& t0 = out.layers[l0];
    const auto& parent = m.skeleton().parent(j);
    if (parent) {
      t0.input.resize(4 + l, b);
      t0.input.topRows(4) = dirs.middleRows(static_cast<Eigen::Index>(4 * j), 4);
      t0.input.bottomRows(l) = feature_dot[*parent];
    } else {
      t0.input = dirs.middleRows(static_cast<Eigen::Index>(4 * j), 4);
    }
    t0.pre.noalias() = m.weight(l0) * t0.input;
    auto& t1 = out.layers[l1];
    t1.input = (trace.layers[l0].slope.array() * t0.pre.array()).matrix();
    t1.pre.noalias() = m.weight(l1) * t1.input;
    feature_dot[j] = (trace.layers[l1].slope.array() * t1.pre.array()).matrix();
  }
  Matrix current(l * static_cast<Eigen::Index>(k), b);
  for (std::size_t j = 0; j < k; ++j) current.middleRows(l * static_cast<Eigen::Index>(j), l) = feature_dot[j];
  for (std::size_t i = 0; i < m.shape().head_layers; ++i) {
    const std::size_t li = m.head_layer(i);
    auto& t = out.layers[li];
    t.input = std::move(current);
    t.pre.noalias() = m.weight(li) * t.input;
    current = (trace.layers[li].slope.array() * t.pre.array()).matrix();
  }
  return out;
}

// Reverse sweep through one layer. `adj` holds the adjoint of the layer
// output on entry and of its input on exit. With a tangent trace the sweep
// is over the dual computation (values and tangents), and `adj_dot` carries
// the adjoint of the output tangent.
void layer_backward(
    const FieldModel& m,
    std::size_t li,
    const LayerTrace& t,
    const TangentLayer* td,
    Matrix& adj,
    Matrix* adj_dot,
    double* grads) {
  const auto d1 = t.slope.array();
  Matrix zbar = (d1 * adj.array()).matrix();
  Matrix zdbar;
  if (td) {
    // softplus'' = beta * s * (1 - s)
    zbar.array() += kSoftplusBeta * d1 * (1.0 - d1) * td->pre.array() * adj_dot->array();
    zdbar = (d1 * adj_dot->array()).matrix();
  }
  const auto& info = m.layer(li);
  if (grads) {
    Eigen::Map<Matrix> wbar(
        grads + info.weight_offset,
        static_cast<Eigen::Index>(info.out),
        static_cast<Eigen::Index>(info.in));
    Eigen::Map<Eigen::VectorXd> bbar(grads + info.bias_offset, static_cast<Eigen::Index>(info.out));
    wbar.noalias() += zbar * t.input.transpose();
    if (td) wbar.noalias() += zdbar * td->input.transpose();
    bbar += zbar.rowwise().sum();
  }
  adj.noalias() = m.weight(li).transpose() * zbar;
  if (td) adj_dot->noalias() = m.weight(li).transpose() * zdbar;
}

// Full reverse sweep. Seeds are per-column adjoints of f (and of the
// tangent of f when `tangent` is given).
void backprop(
    const FieldModel& m,
    const EvalTrace& trace,
    const TangentTrace* tangent,
    const Eigen::RowVectorXd& seed_value,
    const Eigen::RowVectorXd* seed_tangent,
    double* grads,
    Matrix* input_grad) {
  const std::size_t k = m.num_joints();
  const auto l = static_cast<Eigen::Index>(m.shape().feature_width);
  Matrix adj = seed_value;
  Matrix adj_dot;
  if (tangent) adj_dot = *seed_tangent;
  auto step = [&](std::size_t li, Matrix& a, Matrix& ad) {
    layer_backward(
        m, li, trace.layers[li], tangent ? &tangent->layers[li] : nullptr, a,
        tangent ? &ad : nullptr, grads);
  };
  for (std::size_t i = m.shape().head_layers; i-- > 0;) step(m.head_layer(i), adj, adj_dot);

  std::vector<Matrix> feat(k), feat_dot(k);
  for (std::size_t j = 0; j < k; ++j) {
    feat[j] = adj.middleRows(l * static_cast<Eigen::Index>(j), l);
    if (tangent) feat_dot[j] = adj_dot.middleRows(l * static_cast<Eigen::Index>(j), l);
  }
  for (std::size_t j = k; j-- > 0;) {
    step(m.encoder_layer(j, 1), feat[j], feat_dot[j]);
    step(m.encoder_layer(j, 0), feat[j], feat_dot[j]);
    if (input_grad) input_grad->middleRows(static_cast<Eigen::Index>(4 * j), 4) = feat[j].topRows(4);
    if (const auto& p = m.skeleton().parent(j)) {
      feat[*p] += feat[j].bottomRows(l);
      if (tangent) feat_dot[*p] += feat_dot[j].bottomRows(l);
    }
  }
}

std::vector<LayerInfo> build_layers(const ModelShape& s, const SkeletonTopology& skel) {
  std::vector<LayerInfo> layers;
  std::size_t offset = 0;
  auto add = [&](std::size_t in, std::size_t out) {
    LayerInfo info{in, out, offset, offset + in * out};
    offset += in * out + out;
    layers.push_back(info);
  };
  for (std::size_t j = 0; j < s.num_joints; ++j) {
    add(skel.parent(j) ? 4 + s.feature_width : 4, s.encoder_hidden);
    add(s.encoder_hidden, s.feature_width);
  }
  std::size_t width = s.feature_width * s.num_joints;
  for (std::size_t i = 0; i < s.head_layers; ++i) {
    const std::size_t out = (i + 1 == s.head_layers) ? 1 : s.head_width;
    add(width, out);
    width = out;
  }
  return layers;
}

}  // namespace

FieldModel::FieldModel(SkeletonTopology skeleton, ModelShape shape)
    : skeleton_(std::move(skeleton)), shape_(shape) {
  if (shape_.num_joints != skeleton_.size()) {
    throw ShapeMismatch("model shape K differs from skeleton K");
  }
  if (shape_.feature_width == 0 || shape_.encoder_hidden == 0 || shape_.head_width == 0 ||
      shape_.head_layers == 0) {
    throw ConfigError("model widths and layer count must be at least 1");
  }
  layers_ = build_layers(shape_, skeleton_);
  const auto& last = layers_.back();
  params_.assign(last.bias_offset + last.out, 0.0);
}

FieldModel FieldModel::init(const SkeletonTopology& skeleton, ModelShape shape, std::uint64_t seed) {
  FieldModel m(skeleton, shape);
  Rng rng(seed);
  for (std::size_t i = 0; i < m.num_layers(); ++i) {
    const auto& info = m.layer(i);
    const double s = std::sqrt(6.0 / static_cast<double>(info.in + info.out));
    std::uniform_real_distribution<double> dist(-s, s);
    for (std::size_t p = 0; p < info.in * info.out; ++p) m.params_[info.weight_offset + p] = dist(rng);
  }
  return m;
}

Eigen::Map<const Eigen::MatrixXd> FieldModel::weight(std::size_t i) const {
  const auto& l = layers_[i];
  return {params_.data() + l.weight_offset, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in)};
}

Eigen::Map<Eigen::MatrixXd> FieldModel::weight(std::size_t i) {
  const auto& l = layers_[i];
  return {params_.data() + l.weight_offset, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in)};
}

Eigen::Map<const Eigen::VectorXd> FieldModel::bias(std::size_t i) const {
  const auto& l = layers_[i];
  return {params_.data() + l.bias_offset, static_cast<Eigen::Index>(l.out)};
}

Eigen::Map<Eigen::VectorXd> FieldModel::bias(std::size_t i) {
  const auto& l = layers_[i];
  return {params_.data() + l.bias_offset, static_cast<Eigen::Index>(l.out)};
}

FieldModel init_model(
    const SkeletonTopology& skeleton, std::size_t feature_width, std::size_t head_width, std::uint64_t seed) {
  ModelShape shape;
  shape.num_joints = skeleton.size();
  shape.feature_width = feature_width;
  shape.head_width = head_width;
  return FieldModel::init(skeleton, shape, seed);
}

EvalTrace forward_batch(const FieldModel& m, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  check_input_rows(m, inputs.rows());
  const std::size_t k = m.num_joints();
  const auto l = static_cast<Eigen::Index>(m.shape().feature_width);
  const Eigen::Index b = inputs.cols();
  EvalTrace trace;
  trace.layers.resize(m.num_layers());
  for (std::size_t j = 0; j < k; ++j) {
    auto& t0 = trace.layers[m.encoder_layer(j, 0)];
    if (const auto& p = m.skeleton().parent(j)) {
      t0.input.resize(4 + l, b);
      t0.input.topRows(4) = inputs.middleRows(static_cast<Eigen::Index>(4 * j), 4);
      t0.input.bottomRows(l) = trace.layers[m.encoder_layer(*p, 1)].post;
    } else {
      t0.input = inputs.middleRows(static_cast<Eigen::Index>(4 * j), 4);
    }
    apply_layer(m, m.encoder_layer(j, 0), t0);
    auto& t1 = trace.layers[m.encoder_layer(j, 1)];
    t1.input = t0.post;
    apply_layer(m, m.encoder_layer(j, 1), t1);
  }
  Matrix current(l * static_cast<Eigen::Index>(k), b);
  for (std::size_t j = 0; j < k; ++j) {
    current.middleRows(l * static_cast<Eigen::Index>(j), l) = trace.layers[m.encoder_layer(j, 1)].post;
  }
  for (std::size_t i = 0; i < m.shape().head_layers; ++i) {
    auto& t = trace.layers[m.head_layer(i)];
    t.input = std::move(current);
    apply_layer(m, m.head_layer(i), t);
    current = t.post;
  }
  trace.values = current.row(0);
  if (!trace.values.allFinite()) throw NumericalError("field model produced a non-finite value");
  return trace;
}

Eigen::MatrixXd input_gradient_batch(const FieldModel& m, const EvalTrace& trace) {
  Matrix grad(static_cast<Eigen::Index>(4 * m.num_joints()), trace.values.size());
  const Eigen::RowVectorXd seed = Eigen::RowVectorXd::Ones(trace.values.size());
  backprop(m, trace, nullptr, seed, nullptr, nullptr, &grad);
  if (!grad.allFinite()) throw NumericalError("field model produced a non-finite gradient");
  return grad;
}

ForwardResult forward(const FieldModel& m, const Pose& pose) {
  ForwardResult r;
  r.trace = forward_batch(m, pose.ambient());
  r.value = r.trace.values[0];
  return r;
}

double field_value(const FieldModel& m, const Eigen::Ref<const Eigen::VectorXd>& ambient) {
  return forward_batch(m, ambient).values[0];
}

Eigen::VectorXd input_gradient(const FieldModel& m, const Pose& pose) {
  return input_gradient(m, pose.ambient());
}

Eigen::VectorXd input_gradient(const FieldModel& m, const Eigen::Ref<const Eigen::VectorXd>& ambient) {
  const EvalTrace trace = forward_batch(m, ambient);
  return input_gradient_batch(m, trace).col(0);
}

LossResult loss_and_param_grads(
    const FieldModel& m,
    const Eigen::Ref<const Eigen::MatrixXd>& inputs,
    std::span<const double> labels,
    double lambda_eik) {
  const Eigen::Index b = inputs.cols();
  if (b == 0) throw ConfigError("loss_and_param_grads: empty batch");
  if (static_cast<std::size_t>(b) != labels.size()) {
    throw DimensionMismatch("loss_and_param_grads: one label per input column required");
  }
  const EvalTrace trace = forward_batch(m, inputs);
  const Matrix grad_in = input_gradient_batch(m, trace);

  LossResult r;
  r.grads.assign(m.num_parameters(), 0.0);
  Eigen::RowVectorXd seed_value(b);
  Eigen::RowVectorXd seed_tangent = Eigen::RowVectorXd::Zero(b);
  Matrix dirs = Matrix::Zero(grad_in.rows(), b);
  bool any_eikonal = false;
  for (Eigen::Index c = 0; c < b; ++c) {
    const double d = labels[static_cast<std::size_t>(c)];
    const double resid = trace.values[c] - d;
    r.udf += std::abs(resid);
    seed_value[c] = resid > 0.0 ? 1.0 : (resid < 0.0 ? -1.0 : 0.0);
    if (d != 0.0) {
      const double n = grad_in.col(c).norm();
      r.eikonal += (n - 1.0) * (n - 1.0);
      if (n > 0.0) dirs.col(c) = (2.0 * (n - 1.0) / n) * grad_in.col(c);
      seed_tangent[c] = lambda_eik;
      any_eikonal = true;
    }
  }
  if (!std::isfinite(r.udf) || !std::isfinite(r.eikonal)) {
    throw NumericalError("loss_and_param_grads: non-finite loss");
  }
  if (any_eikonal && lambda_eik != 0.0) {
    const TangentTrace tangent = tangent_forward(m, trace, dirs);
    backprop(m, trace, &tangent, seed_value, &seed_tangent, r.grads.data(), nullptr);
  } else {
    backprop(m, trace, nullptr, seed_value, nullptr, r.grads.data(), nullptr);
  }
  for (double g : r.grads) {
    if (!std::isfinite(g)) throw NumericalError("loss_and_param_grads: non-finite gradient");
  }
  return r;
}

LossResult loss_and_param_grads(
    const FieldModel& m, std::span<const LabeledPose> batch, double lambda_eik) {
  if (batch.empty()) throw ConfigError("loss_and_param_grads: empty batch");
  Matrix inputs(static_cast<Eigen::Index>(4 * m.num_joints()), static_cast<Eigen::Index>(batch.size()));
  std::vector<double> labels;
  labels.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].pose.size() != m.num_joints()) {
      throw DimensionMismatch("loss_and_param_grads: pose does not match model K");
    }
    inputs.col(static_cast<Eigen::Index>(i)) = batch[i].pose.ambient();
    labels.push_back(batch[i].distance);
  }
  return loss_and_param_grads(m, inputs, labels, lambda_eik);
}

Eigen::MatrixXd stack_ambient(std::span<const Pose> poses) {
  if (poses.empty()) return {};
  Matrix out(static_cast<Eigen::Index>(4 * poses[0].size()), static_cast<Eigen::Index>(poses.size()));
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (poses[i].size() != poses[0].size()) throw DimensionMismatch("stack_ambient: mixed K");
    out.col(static_cast<Eigen::Index>(i)) = poses[i].ambient();
  }
  return out;
}

// --- checkpoint ---------------------------------------------------------------

namespace {
constexpr std::array<char, 4> kModelMagic{'P', 'N', 'M', 'D'};
}

void save_model(const FieldModel& m, const std::string& path) {
  detail::ByteWriter w;
  const auto& s = m.shape();
  const auto& skel = m.skeleton();
  w.bytes(kModelMagic.data(), kModelMagic.size());
  w.u32(kCheckpointFormatVersion);
  w.u32(static_cast<std::uint32_t>(s.num_joints));
  w.u32(static_cast<std::uint32_t>(s.feature_width));
  w.u32(static_cast<std::uint32_t>(s.encoder_hidden));
  w.u32(static_cast<std::uint32_t>(s.head_width));
  w.u32(static_cast<std::uint32_t>(s.head_layers));
  for (std::size_t j = 0; j < skel.size(); ++j) {
    w.i32(skel.parent(j) ? static_cast<std::int32_t>(*skel.parent(j)) : -1);
  }
  for (const auto& o : skel.offsets()) {
    w.f64(o.x());
    w.f64(o.y());
    w.f64(o.z());
  }
  for (double wt : skel.weights()) w.f64(wt);
  w.u64(m.num_parameters());
  for (double p : m.parameters()) w.f64(p);
  w.crc_trailer();
  detail::write_file(path, w.data());
}

FieldModel load_model(const std::string& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() < kModelMagic.size()) throw TruncatedFile(path + ": missing header");
  if (std::memcmp(bytes.data(), kModelMagic.data(), kModelMagic.size()) != 0) {
    throw FormatError(path + ": not a model checkpoint (bad magic)");
  }
  detail::ByteReader r(bytes.data(), bytes.size());
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointFormatVersion) {
    throw VersionMismatch(
        path + ": checkpoint version " + std::to_string(version) + ", expected " +
        std::to_string(kCheckpointFormatVersion));
  }
  ModelShape s;
  s.num_joints = r.u32();
  s.feature_width = r.u32();
  s.encoder_hidden = r.u32();
  s.head_width = r.u32();
  s.head_layers = r.u32();
  // Cap before allocating from untrusted sizes.
  r.need(s.num_joints * (4 + 24 + 8));
  std::vector<std::optional<std::size_t>> parents(s.num_joints);
  for (auto& p : parents) {
    const std::int32_t v = r.i32();
    if (v >= 0) p = static_cast<std::size_t>(v);
  }
  std::vector<Eigen::Vector3d> offsets(s.num_joints);
  for (auto& o : offsets) {
    const double x = r.f64(), y = r.f64(), z = r.f64();
    o = {x, y, z};
  }
  std::vector<double> weights(s.num_joints);
  for (auto& wt : weights) wt = r.f64();
  const std::uint64_t count = r.u64();
  if (r.remaining() < 4 || (r.remaining() - 4) / 8 < count) throw TruncatedFile(path + ": truncated parameters");
  if (r.remaining() != count * 8 + 4) throw FormatError(path + ": trailing bytes after parameters");
  detail::check_crc_trailer(bytes);

  FieldModel m;
  try {
    m = FieldModel(SkeletonTopology(std::move(parents), std::move(offsets), std::move(weights)), s);
  } catch (const ConfigError& e) {
    throw FormatError(path + ": invalid stored model: " + e.what());
  } catch (const DimensionMismatch& e) {
    throw FormatError(path + ": invalid stored model: " + e.what());
  }
  if (m.num_parameters() != count) {
    throw ShapeMismatch(path + ": parameter count does not match the stored shape");
  }
  for (auto& p : m.parameters()) p = r.f64();
  return m;
}

FieldModel load_model(const std::string& path, const SkeletonTopology& expected) {
  FieldModel m = load_model(path);
  if (m.num_joints() != expected.size()) {
    throw ShapeMismatch(
        path + ": checkpoint has K=" + std::to_string(m.num_joints()) + ", skeleton has K=" +
        std::to_string(expected.size()));
  }
  if (!(m.skeleton() == expected)) throw ShapeMismatch(path + ": checkpoint skeleton differs");
  return m;
}

}  // namespace posendf
