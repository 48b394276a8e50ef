#include "posendf/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "posendf/error.hpp"
#include "posendf/parallel.hpp"

namespace posendf {

using nlohmann::json;

// --- synthetic manifold -----------------------------------------------------

SyntheticManifoldSpec SyntheticManifoldSpec::random(
    std::size_t num_joints, std::size_t latent_dim, std::uint64_t seed) {
  if (num_joints == 0 || latent_dim == 0) {
    throw ConfigError("manifold spec: num_joints and latent_dim must be positive");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto k = static_cast<Eigen::Index>(num_joints);
  const auto m = static_cast<Eigen::Index>(latent_dim);

  SyntheticManifoldSpec s;
  s.num_joints = num_joints;
  s.latent_dim = latent_dim;
  s.seed = seed;
  s.amplitude.resize(k, m);
  s.frequency.resize(k, m);
  s.phase.resize(k, m);
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Vector3d axis;
    do {
      axis = {normal(rng), normal(rng), normal(rng)};
    } while (axis.norm() < 1e-6);
    s.axes.push_back(axis.normalized());
    s.center.push_back(-0.4 + 0.8 * unit(rng));
    double reach = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      s.amplitude(j, i) = sign * (0.2 + 0.4 * unit(rng));
      s.frequency(j, i) = 1.0 + 2.0 * unit(rng);
      s.phase(j, i) = 2.0 * std::numbers::pi * unit(rng);
      reach += std::abs(s.amplitude(j, i));
    }
    s.lo.push_back(s.center.back() - reach);
    s.hi.push_back(s.center.back() + reach);
  }
  return s;
}

void SyntheticManifoldSpec::validate() const {
  const auto k = static_cast<Eigen::Index>(num_joints);
  const auto m = static_cast<Eigen::Index>(latent_dim);
  if (num_joints == 0 || latent_dim == 0) {
    throw ConfigError("manifold spec: num_joints and latent_dim must be positive");
  }
  if (axes.size() != num_joints || center.size() != num_joints || lo.size() != num_joints ||
      hi.size() != num_joints) {
    throw DimensionMismatch("manifold spec: per-joint arrays must have num_joints entries");
  }
  for (const auto* mat : {&amplitude, &frequency, &phase}) {
    if (mat->rows() != k || mat->cols() != m) {
      throw DimensionMismatch("manifold spec: coefficient matrices must be K x m");
    }
  }
  for (std::size_t j = 0; j < num_joints; ++j) {
    if (!(axes[j].norm() > 1e-9)) throw ConfigError("manifold spec: zero rotation axis");
    if (!(lo[j] <= hi[j])) throw ConfigError("manifold spec: lo must not exceed hi");
  }
}

std::vector<double> SyntheticManifoldSpec::angles(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  if (u.size() != static_cast<Eigen::Index>(latent_dim)) {
    throw DimensionMismatch("manifold spec: latent has wrong dimension");
  }
  std::vector<double> out(num_joints);
  for (std::size_t j = 0; j < num_joints; ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    double a = center[j];
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      a += amplitude(r, i) * std::sin(frequency(r, i) * u[i] + phase(r, i));
    }
    out[j] = std::clamp(a, lo[j], hi[j]);
  }
  return out;
}

Pose SyntheticManifoldSpec::pose_at(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  const auto a = angles(u);
  std::vector<UnitQuaternion> joints;
  joints.reserve(num_joints);
  for (std::size_t j = 0; j < num_joints; ++j) {
    joints.push_back(UnitQuaternion::from_axis_angle(axes[j], a[j]));
  }
  return Pose(std::move(joints));
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, std::size_t rows, std::size_t cols) {
  if (j.size() != rows) throw FormatError("manifold spec json: wrong matrix row count");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw FormatError("manifold spec json: wrong matrix column count");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

}  // namespace

std::string manifold_spec_to_json(const SyntheticManifoldSpec& s) {
  json j;
  j["num_joints"] = s.num_joints;
  j["latent_dim"] = s.latent_dim;
  j["seed"] = s.seed;
  json axes = json::array();
  for (const auto& a : s.axes) axes.push_back({a.x(), a.y(), a.z()});
  j["axes"] = axes;
  j["center"] = s.center;
  j["amplitude"] = matrix_to_json(s.amplitude);
  j["frequency"] = matrix_to_json(s.frequency);
  j["phase"] = matrix_to_json(s.phase);
  j["lo"] = s.lo;
  j["hi"] = s.hi;
  return j.dump(2);
}

SyntheticManifoldSpec manifold_spec_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const auto k = j.at("num_joints").get<std::size_t>();
    const auto m = j.value("latent_dim", std::size_t{2});
    const auto seed = j.value("seed", std::uint64_t{0});
    if (!j.contains("axes")) return SyntheticManifoldSpec::random(k, m, seed);

    SyntheticManifoldSpec s;
    s.num_joints = k;
    s.latent_dim = m;
    s.seed = seed;
    for (const auto& a : j.at("axes")) {
      if (a.size() != 3) throw FormatError("manifold spec json: axes must be 3-vectors");
      s.axes.emplace_back(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
    }
    s.center = j.at("center").get<std::vector<double>>();
    s.amplitude = matrix_from_json(j.at("amplitude"), k, m);
    s.frequency = matrix_from_json(j.at("frequency"), k, m);
    s.phase = matrix_from_json(j.at("phase"), k, m);
    s.lo = j.at("lo").get<std::vector<double>>();
    s.hi = j.at("hi").get<std::vector<double>>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifold spec json: ") + e.what());
  }
}

SyntheticManifoldSpec load_manifold_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifold spec " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return manifold_spec_from_json(ss.str());
}

void save_manifold_spec(const SyntheticManifoldSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifold spec " + path);
  out << manifold_spec_to_json(spec) << '\n';
}

std::uint64_t manifold_spec_hash(const SyntheticManifoldSpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : manifold_spec_to_json(spec)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<Pose> sample_manifold(const SyntheticManifoldSpec& spec, std::size_t n, Rng& rng) {
  if (n == 0) throw ConfigError("sample_manifold: n must be at least 1");
  spec.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Pose> out;
  out.reserve(n);
  Eigen::VectorXd u(static_cast<Eigen::Index>(spec.latent_dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index d = 0; d < u.size(); ++d) u[d] = unit(rng);
    out.push_back(spec.pose_at(u));
  }
  return out;
}

// --- tiers and negatives ------------------------------------------------------

std::string_view tier_name(Tier tier) {
  switch (tier) {
    case Tier::manifold: return "manifold";
    case Tier::far: return "far";
    case Tier::mid: return "mid";
    case Tier::near: return "near";
  }
  throw FormatError("unknown tier value");
}

Tier tier_from_name(std::string_view name) {
  for (Tier t : kAllTiers) {
    if (tier_name(t) == name) return t;
  }
  throw ConfigError("unknown tier name '" + std::string(name) + "'");
}

Tier tier_for_sigma(double sigma) {
  const TierSigmas d;
  if (sigma >= 0.5 * (d.far + d.mid)) return Tier::far;
  if (sigma >= 0.5 * (d.mid + d.near)) return Tier::mid;
  return Tier::near;
}

std::vector<TieredPose> build_negatives(
    const std::vector<Pose>& manifold,
    std::span<const double> sigmas,
    std::size_t per_sigma,
    Rng& rng,
    double joint_prob) {
  if (manifold.empty()) throw InsufficientData("build_negatives: manifold set is empty");
  std::uniform_int_distribution<std::size_t> pick(0, manifold.size() - 1);
  std::vector<TieredPose> out;
  out.reserve(sigmas.size() * per_sigma);
  for (double sigma : sigmas) {
    const Tier tier = tier_for_sigma(sigma);
    for (std::size_t i = 0; i < per_sigma; ++i) {
      const Pose& base = manifold[pick(rng)];
      out.push_back({perturb_pose(base, sigma, joint_prob, rng), tier, sigma});
    }
  }
  return out;
}

// --- kNN labeling -----------------------------------------------------------

namespace {

void check_label_args(std::size_t available, std::size_t kprime, std::size_t k) {
  if (k == 0) throw ConfigError("kNN label: k must be at least 1");
  if (kprime < k) throw ConfigError("kNN label: kprime must be at least k");
  if (available < kprime) {
    throw InsufficientData(
        "kNN label: manifold has " + std::to_string(available) + " poses, need " +
        std::to_string(kprime));
  }
}

double mean_of_smallest(std::vector<Neighbor>& candidates, std::size_t k) {
  std::partial_sort(
      candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += candidates[i].distance;
  return sum / static_cast<double>(k);
}

}  // namespace

KnnLabeler::KnnLabeler(const std::vector<Pose>& manifold, const SkeletonTopology& skel)
    : poses_(manifold), skel_(skel), dim_(4 * skel.size()) {
  coords_.resize(poses_.size() * dim_);
  for (std::size_t i = 0; i < poses_.size(); ++i) {
    if (poses_[i].size() != skel.size()) {
      throw DimensionMismatch("KnnLabeler: manifold pose does not match skeleton");
    }
    for (std::size_t j = 0; j < skel.size(); ++j) {
      const auto c = poses_[i][j].components();
      const double s = std::sqrt(skel.weight(j));
      for (std::size_t d = 0; d < 4; ++d) coords_[i * dim_ + 4 * j + d] = s * c[d];
    }
  }
}

std::vector<std::size_t> KnnLabeler::prefilter(const Pose& query, std::size_t kprime) const {
  if (query.size() != skel_.size()) throw DimensionMismatch("KnnLabeler: query size mismatch");
  check_label_args(poses_.size(), kprime, 1);
  const std::size_t k = skel_.size();
  std::vector<double> q(dim_);
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const auto c = query[j].components();
    const double s = std::sqrt(skel_.weight(j));
    for (std::size_t d = 0; d < 4; ++d) q[4 * j + d] = s * c[d];
    total += skel_.weight(j);
  }
  // sum_j w_j (1 - |q_j . r_j|): half the squared L2 distance between the
  // weight-scaled coordinates with each joint of r in the query's hemisphere.
  std::vector<Neighbor> cand(poses_.size());
  for (std::size_t i = 0; i < poses_.size(); ++i) {
    const double* row = coords_.data() + i * dim_;
    double s = total;
    for (std::size_t j = 0; j < k; ++j) {
      const double* a = row + 4 * j;
      const double* b = q.data() + 4 * j;
      s -= std::abs(a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]);
    }
    cand[i] = {s, i};
  }
  if (kprime < cand.size()) {
    std::nth_element(
        cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kprime), cand.end());
    cand.resize(kprime);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<std::size_t> out;
  out.reserve(cand.size());
  for (const auto& c : cand) out.push_back(c.index);
  return out;
}

double KnnLabeler::label(const Pose& query, std::size_t kprime, std::size_t k) const {
  check_label_args(poses_.size(), kprime, k);
  const auto shortlist = prefilter(query, kprime);
  std::vector<Neighbor> cand;
  cand.reserve(shortlist.size());
  for (std::size_t idx : shortlist) cand.push_back({pose_distance(query, poses_[idx], skel_), idx});
  return mean_of_smallest(cand, k);
}

std::vector<double> KnnLabeler::label_all(
    const std::vector<Pose>& queries, std::size_t kprime, std::size_t k, unsigned threads) const {
  check_label_args(poses_.size(), kprime, k);
  std::vector<double> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) { out[i] = label(queries[i], kprime, k); });
  return out;
}

double knn_label(
    const Pose& query,
    const std::vector<Pose>& manifold,
    std::size_t kprime,
    std::size_t k,
    const SkeletonTopology& skel) {
  check_label_args(manifold.size(), kprime, k);
  return KnnLabeler(manifold, skel).label(query, kprime, k);
}

double exact_label(
    const Pose& query, const std::vector<Pose>& manifold, std::size_t k, const SkeletonTopology& skel) {
  check_label_args(manifold.size(), k, k);
  std::vector<Neighbor> cand;
  cand.reserve(manifold.size());
  for (std::size_t i = 0; i < manifold.size(); ++i) {
    cand.push_back({pose_distance(query, manifold[i], skel), i});
  }
  return mean_of_smallest(cand, k);
}

// --- ground-truth oracle ------------------------------------------------------

OracleGrid::OracleGrid(
    const SyntheticManifoldSpec& spec, std::size_t resolution, const SkeletonTopology& skel)
    : skel_(skel) {
  if (resolution < 2) throw ConfigError("oracle grid: resolution must be at least 2");
  spec.validate();
  if (spec.num_joints != skel.size()) {
    throw DimensionMismatch("oracle grid: manifold spec and skeleton disagree on K");
  }
  const std::size_t m = spec.latent_dim;
  std::size_t total = 1;
  for (std::size_t d = 0; d < m; ++d) total *= resolution;
  poses_.reserve(total);
  Eigen::VectorXd u(static_cast<Eigen::Index>(m));
  const double step = 1.0 / static_cast<double>(resolution - 1);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t d = 0; d < m; ++d) {
      u[static_cast<Eigen::Index>(d)] = static_cast<double>(rem % resolution) * step;
      rem /= resolution;
    }
    poses_.push_back(spec.pose_at(u));
  }
}

double OracleGrid::distance(const Pose& query) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : poses_) best = std::min(best, pose_distance(query, p, skel_));
  return best;
}

double oracle_manifold_distance(
    const Pose& query,
    const SyntheticManifoldSpec& spec,
    std::size_t resolution,
    const SkeletonTopology& skel) {
  return OracleGrid(spec, resolution, skel).distance(query);
}

// --- dataset ----------------------------------------------------------------

void PoseDataset::refresh_counts() {
  metadata.tier_counts = {};
  for (const auto& s : samples) ++metadata.tier_counts[static_cast<std::size_t>(s.tier)];
}

void PoseDataset::validate() const {
  std::array<std::size_t, 4> counts{};
  for (const auto& s : samples) {
    if (s.pose.size() != skeleton.size()) {
      throw DimensionMismatch("dataset: pose does not match skeleton");
    }
    if (!(s.distance >= 0.0) || !std::isfinite(s.distance)) {
      throw FormatError("dataset: distance labels must be finite and non-negative");
    }
    if ((s.tier == Tier::manifold) != (s.distance == 0.0)) {
      throw FormatError("dataset: tier 'manifold' must coincide with a zero label");
    }
    ++counts[static_cast<std::size_t>(s.tier)];
  }
  if (counts != metadata.tier_counts) throw FormatError("dataset: metadata tier counts disagree");
}

}  // namespace posendf
