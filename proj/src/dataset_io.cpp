#include "posendf/dataset_io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "json.hpp"

namespace posendf {

using nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic{'P', 'N', 'D', 'F'};
constexpr std::size_t kHeaderBytes = 16;

std::size_t record_bytes(std::size_t k) { return k * 4 * 8 + 8 + 1; }

}  // namespace

std::string sidecar_path(const std::string& path) { return path + ".json"; }

void save_dataset(const PoseDataset& ds, const std::string& path) {
  ds.validate();
  const std::size_t k = ds.skeleton.size();
  detail::ByteWriter w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kDatasetFormatVersion);
  w.u32(static_cast<std::uint32_t>(k));
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  for (const auto& s : ds.samples) {
    for (const auto& q : s.pose.joints()) {
      for (double c : q.components()) w.f64(c);
    }
    w.f64(s.distance);
    w.u8(static_cast<std::uint8_t>(s.tier));
  }
  w.crc_trailer();
  detail::write_file(path, w.data());

  json side;
  side["format_version"] = kDatasetFormatVersion;
  side["k"] = k;
  side["count"] = ds.samples.size();
  side["seed"] = ds.metadata.seed;
  side["spec_hash"] = ds.metadata.spec_hash;
  json counts;
  for (Tier t : kAllTiers) {
    counts[std::string(tier_name(t))] = ds.metadata.tier_counts[static_cast<std::size_t>(t)];
  }
  side["tier_counts"] = counts;
  side["skeleton"] = json::parse(skeleton_to_json(ds.skeleton));
  std::ofstream out(sidecar_path(path));
  if (!out) throw IoError("cannot write " + sidecar_path(path));
  out << side.dump(2) << '\n';
}

PoseDataset load_dataset(const std::string& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() < kMagic.size()) throw TruncatedFile(path + ": missing header");
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError(path + ": not a pose dataset (bad magic)");
  }
  if (bytes.size() < kHeaderBytes) throw TruncatedFile(path + ": truncated header");
  detail::ByteReader r(bytes.data(), bytes.size());
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  const std::uint32_t version = r.u32();
  if (version != kDatasetFormatVersion) {
    throw VersionMismatch(
        path + ": dataset format version " + std::to_string(version) + ", expected " +
        std::to_string(kDatasetFormatVersion));
  }
  const std::size_t k = r.u32();
  const std::size_t count = r.u32();
  const std::size_t expected = kHeaderBytes + count * record_bytes(k) + 4;
  if (bytes.size() < expected) throw TruncatedFile(path + ": truncated records");
  if (bytes.size() > expected) throw FormatError(path + ": trailing bytes after records");
  detail::check_crc_trailer(bytes);

  PoseDataset ds;
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<UnitQuaternion> joints;
    joints.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
      const double qw = r.f64(), qx = r.f64(), qy = r.f64(), qz = r.f64();
      try {
        joints.push_back(UnitQuaternion::from_unit(qw, qx, qy, qz));
      } catch (const DegenerateQuaternion& e) {
        throw FormatError(path + ": record " + std::to_string(i) + ": " + e.what());
      }
    }
    LabeledPose s;
    s.pose = Pose(std::move(joints));
    s.distance = r.f64();
    const std::uint8_t tier = r.u8();
    if (tier > static_cast<std::uint8_t>(Tier::near)) {
      throw FormatError(path + ": invalid tier byte in record " + std::to_string(i));
    }
    s.tier = static_cast<Tier>(tier);
    ds.samples.push_back(std::move(s));
  }

  std::ifstream in(sidecar_path(path));
  if (!in) throw FormatError(path + ": missing metadata sidecar " + sidecar_path(path));
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    const json side = json::parse(ss.str());
    if (side.at("format_version").get<std::uint32_t>() != kDatasetFormatVersion) {
      throw VersionMismatch(path + ": sidecar version mismatch");
    }
    if (side.at("k").get<std::size_t>() != k || side.at("count").get<std::size_t>() != count) {
      throw FormatError(path + ": sidecar disagrees with binary header");
    }
    ds.metadata.seed = side.at("seed").get<std::uint64_t>();
    ds.metadata.spec_hash = side.at("spec_hash").get<std::uint64_t>();
    for (Tier t : kAllTiers) {
      ds.metadata.tier_counts[static_cast<std::size_t>(t)] =
          side.at("tier_counts").at(std::string(tier_name(t))).get<std::size_t>();
    }
    ds.skeleton = skeleton_from_json(side.at("skeleton").dump());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad sidecar: " + e.what());
  }
  if (ds.skeleton.size() != k) throw FormatError(path + ": sidecar skeleton has wrong K");
  ds.validate();
  return ds;
}

}  // namespace posendf
