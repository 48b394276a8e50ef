#include "posendf/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "posendf/error.hpp"
#include "posendf/so3.hpp"

namespace posendf {

using nlohmann::json;

SkeletonTopology::SkeletonTopology(
    std::vector<std::optional<std::size_t>> parents,
    std::vector<Eigen::Vector3d> offsets,
    std::vector<double> weights)
    : parents_(std::move(parents)), offsets_(std::move(offsets)), weights_(std::move(weights)) {
  const std::size_t k = parents_.size();
  if (k == 0) throw ConfigError("skeleton must have at least one joint");
  if (offsets_.size() != k) {
    throw DimensionMismatch("skeleton: expected " + std::to_string(k) + " offsets");
  }
  depths_.assign(k, 0);
  children_.assign(k, {});
  for (std::size_t j = 0; j < k; ++j) {
    if (parents_[j]) {
      const std::size_t p = *parents_[j];
      if (p >= j) {
        throw ConfigError(
            "skeleton: parent of joint " + std::to_string(j) + " must precede it");
      }
      depths_[j] = depths_[p] + 1;
      children_[p].push_back(j);
    }
  }
  if (weights_.empty()) {
    weights_.resize(k);
    for (std::size_t j = 0; j < k; ++j) weights_[j] = std::ldexp(1.0, -depths_[j]);
  }
  if (weights_.size() != k) {
    throw DimensionMismatch("skeleton: expected " + std::to_string(k) + " weights");
  }
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("skeleton: weights must be positive");
  }
}

SkeletonTopology SkeletonTopology::binary_tree(std::size_t k) {
  std::vector<std::optional<std::size_t>> parents(k);
  std::vector<Eigen::Vector3d> offsets(k, Eigen::Vector3d::Zero());
  for (std::size_t j = 1; j < k; ++j) {
    parents[j] = (j - 1) / 2;
    offsets[j][static_cast<Eigen::Index>(j % 3)] = 1.0;
  }
  return SkeletonTopology(std::move(parents), std::move(offsets));
}

bool SkeletonTopology::is_ancestor(std::size_t ancestor, std::size_t joint) const {
  auto p = parents_[joint];
  while (p) {
    if (*p == ancestor) return true;
    p = parents_[*p];
  }
  return false;
}

bool SkeletonTopology::operator==(const SkeletonTopology& o) const {
  return parents_ == o.parents_ && offsets_ == o.offsets_ && weights_ == o.weights_;
}

std::string skeleton_to_json(const SkeletonTopology& skel) {
  json j;
  j["k"] = skel.size();
  json parents = json::array();
  json offsets = json::array();
  for (std::size_t k = 0; k < skel.size(); ++k) {
    if (skel.parent(k)) {
      parents.push_back(*skel.parent(k));
    } else {
      parents.push_back(nullptr);
    }
    const auto& o = skel.offset(k);
    offsets.push_back({o.x(), o.y(), o.z()});
  }
  j["parents"] = parents;
  j["offsets"] = offsets;
  j["weights"] = skel.weights();
  return j.dump(2);
}

SkeletonTopology skeleton_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    const auto k = j.at("k").get<std::size_t>();
    const auto& jp = j.at("parents");
    const auto& jo = j.at("offsets");
    if (jp.size() != k || jo.size() != k) {
      throw FormatError("skeleton json: parents/offsets must have k entries");
    }
    std::vector<std::optional<std::size_t>> parents(k);
    std::vector<Eigen::Vector3d> offsets(k);
    for (std::size_t i = 0; i < k; ++i) {
      if (!jp[i].is_null()) parents[i] = jp[i].get<std::size_t>();
      if (jo[i].size() != 3) throw FormatError("skeleton json: offsets must be 3-vectors");
      offsets[i] = {jo[i][0].get<double>(), jo[i][1].get<double>(), jo[i][2].get<double>()};
    }
    std::vector<double> weights;
    if (j.contains("weights")) weights = j["weights"].get<std::vector<double>>();
    return SkeletonTopology(std::move(parents), std::move(offsets), std::move(weights));
  } catch (const json::exception& e) {
    throw FormatError(std::string("skeleton json: ") + e.what());
  }
}

SkeletonTopology load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open skeleton file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return skeleton_from_json(ss.str());
}

void save_skeleton(const SkeletonTopology& skel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write skeleton file " + path);
  out << skeleton_to_json(skel) << '\n';
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q) {
  const Eigen::Vector4d u = q.normalized();
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

namespace {

void check_fk_dims(Eigen::Index ambient_size, const SkeletonTopology& skel) {
  if (ambient_size != static_cast<Eigen::Index>(4 * skel.size())) {
    throw DimensionMismatch(
        "forward_kinematics: pose has " + std::to_string(ambient_size / 4) +
        " joints, skeleton has " + std::to_string(skel.size()));
  }
}

// d(normalized rotation matrix)/d(unit w, x, y, z) contracted with `adj`.
Eigen::Vector4d rotation_matrix_vjp(const Eigen::Vector4d& u, const Eigen::Matrix3d& adj) {
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Eigen::Matrix3d dw, dx, dy, dz;
  dw << 0, -z, y, z, 0, -x, -y, x, 0;
  dx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  return 2.0 * Eigen::Vector4d(
                   (dw.array() * adj.array()).sum(), (dx.array() * adj.array()).sum(),
                   (dy.array() * adj.array()).sum(), (dz.array() * adj.array()).sum());
}

}  // namespace

JointPositions forward_kinematics(const Pose& pose, const SkeletonTopology& skel) {
  return forward_kinematics(pose.ambient(), skel);
}

JointPositions forward_kinematics(
    const Eigen::Ref<const Eigen::VectorXd>& ambient, const SkeletonTopology& skel) {
  check_fk_dims(ambient.size(), skel);
  const std::size_t k = skel.size();
  std::vector<Eigen::Matrix3d> global(k);
  JointPositions out;
  out.positions.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const Eigen::Matrix3d local =
        rotation_matrix(ambient.segment<4>(static_cast<Eigen::Index>(4 * j)));
    if (const auto& p = skel.parent(j)) {
      out[j] = out[*p] + global[*p] * skel.offset(j);
      global[j] = global[*p] * local;
    } else {
      out[j] = skel.offset(j);
      global[j] = local;
    }
  }
  return out;
}

Eigen::VectorXd forward_kinematics_vjp(
    const Eigen::Ref<const Eigen::VectorXd>& ambient,
    const SkeletonTopology& skel,
    const std::vector<Eigen::Vector3d>& position_adjoints) {
  check_fk_dims(ambient.size(), skel);
  const std::size_t k = skel.size();
  if (position_adjoints.size() != k) {
    throw DimensionMismatch("forward_kinematics_vjp: adjoint count must equal K");
  }
  std::vector<Eigen::Vector4d> unit(k);
  std::vector<double> norms(k);
  std::vector<Eigen::Matrix3d> local(k), global(k);
  for (std::size_t j = 0; j < k; ++j) {
    const Eigen::Vector4d q = ambient.segment<4>(static_cast<Eigen::Index>(4 * j));
    norms[j] = q.norm();
    if (!(norms[j] > 1e-12)) throw DegenerateQuaternion("forward_kinematics_vjp: zero joint");
    unit[j] = q / norms[j];
    local[j] = rotation_matrix(unit[j]);
    const auto& p = skel.parent(j);
    global[j] = p ? Eigen::Matrix3d(global[*p] * local[j]) : local[j];
  }

  std::vector<Eigen::Vector3d> pos_adj = position_adjoints;
  std::vector<Eigen::Matrix3d> global_adj(k, Eigen::Matrix3d::Zero());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(ambient.size());
  for (std::size_t jj = k; jj-- > 0;) {
    Eigen::Matrix3d local_adj;
    if (const auto& p = skel.parent(jj)) {
      global_adj[*p] += global_adj[jj] * local[jj].transpose();
      local_adj = global[*p].transpose() * global_adj[jj];
      pos_adj[*p] += pos_adj[jj];
      global_adj[*p] += pos_adj[jj] * skel.offset(jj).transpose();
    } else {
      local_adj = global_adj[jj];
    }
    const Eigen::Vector4d du = rotation_matrix_vjp(unit[jj], local_adj);
    // Chain through u = q / |q|.
    const Eigen::Vector4d dq = (du - unit[jj] * unit[jj].dot(du)) / norms[jj];
    grad.segment<4>(static_cast<Eigen::Index>(4 * jj)) = dq;
  }
  return grad;
}

double mean_joint_distance(const JointPositions& a, const JointPositions& b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("mean_joint_distance: position sets differ in size");
  }
  if (a.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sum += (a[k] - b[k]).norm();
  return sum / static_cast<double>(a.size());
}

}  // namespace posendf
