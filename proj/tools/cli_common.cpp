#include "cli_common.hpp"

#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>

#include "posendf/dataset_io.hpp"
#include "posendf/error.hpp"

namespace posendf::cli {

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

int emit_error(const std::string& command, const char* type, const std::string& message, int code) {
  json out{
      {"schema_version", kSchemaVersion},
      {"command", command},
      {"status", "error"},
      {"error", {{"type", type}, {"message", message}, {"exit_code", code}}}};
  std::cout << out.dump() << std::endl;
  return code;
}

}  // namespace

int report_current_exception(const std::string& command) {
  try {
    throw;
  } catch (const SamplingError& e) {
    return emit_error(command, "SamplingError", e.what(), kSampling);
  } catch (const VersionMismatch& e) {
    return emit_error(command, "VersionMismatch", e.what(), kVersion);
  } catch (const TruncatedFile& e) {
    return emit_error(command, "TruncatedFile", e.what(), kTruncated);
  } catch (const ChecksumMismatch& e) {
    return emit_error(command, "ChecksumMismatch", e.what(), kChecksum);
  } catch (const FormatError& e) {
    return emit_error(command, "FormatError", e.what(), kFormat);
  } catch (const ConfigError& e) {
    return emit_error(command, "ConfigError", e.what(), kConfig);
  } catch (const IoError& e) {
    return emit_error(command, "IoError", e.what(), kIo);
  } catch (const DimensionMismatch& e) {
    return emit_error(command, "DimensionMismatch", e.what(), kDimension);
  } catch (const ShapeMismatch& e) {
    return emit_error(command, "ShapeMismatch", e.what(), kDimension);
  } catch (const NumericalError& e) {
    return emit_error(command, "NumericalError", e.what(), kNumerical);
  } catch (const InsufficientData& e) {
    return emit_error(command, "InsufficientData", e.what(), kInsufficientData);
  } catch (const DegenerateQuaternion& e) {
    return emit_error(command, "DegenerateQuaternion", e.what(), kDegenerate);
  } catch (const json::exception& e) {
    return emit_error(command, "ConfigError", e.what(), kConfig);
  } catch (const std::exception& e) {
    return emit_error(command, "Unexpected", e.what(), kUnexpected);
  }
}

json load_config(const std::optional<std::string>& path) {
  if (!path) return json::object();
  json j = read_json_file(*path);
  if (!j.is_object()) throw ConfigError(*path + ": config must be a JSON object");
  return j;
}

json section(const json& config, const char* name) {
  if (!config.contains(name)) return json::object();
  const json& s = config.at(name);
  if (!s.is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
  return s;
}

void print_summary(const json& summary) {
  json out = summary;
  out["schema_version"] = kSchemaVersion;
  out["status"] = "ok";
  std::cout << out.dump() << std::endl;
}

Pose read_pose(const std::string& path, std::size_t index) {
  const PoseDataset ds = load_dataset(path);
  if (index >= ds.samples.size()) {
    throw ConfigError(path + ": record " + std::to_string(index) + " out of range");
  }
  return ds.samples[index].pose;
}

PoseDataset read_poses(const std::string& path) {
  PoseDataset ds = load_dataset(path);
  if (ds.samples.empty()) throw ConfigError(path + ": no poses");
  return ds;
}

void write_poses(
    const std::string& path,
    const SkeletonTopology& skel,
    const std::vector<Pose>& poses,
    std::uint64_t seed,
    const PoseDataset* labels_from) {
  PoseDataset ds;
  ds.skeleton = skel;
  ds.metadata.seed = seed;
  if (labels_from) ds.metadata.spec_hash = labels_from->metadata.spec_hash;
  ds.samples.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    LabeledPose lp{poses[i], 0.0, Tier::manifold};
    if (labels_from) {
      lp.distance = labels_from->samples[i].distance;
      lp.tier = labels_from->samples[i].tier;
    }
    ds.samples.push_back(std::move(lp));
  }
  ds.refresh_counts();
  save_dataset(ds, path);
}

JointPositions parse_positions(const json& frame) {
  if (!frame.is_array()) throw FormatError("joint positions must be an array of [x, y, z]");
  JointPositions p;
  for (const auto& e : frame) {
    if (e.is_null()) {
      p.positions.emplace_back(Eigen::Vector3d::Zero());
      continue;
    }
    if (!e.is_array() || e.size() != 3) throw FormatError("joint position must be [x, y, z]");
    p.positions.emplace_back(e[0].get<double>(), e[1].get<double>(), e[2].get<double>());
  }
  return p;
}

std::vector<JointPositions> read_observations(const std::string& path) {
  const json j = read_json_file(path);
  if (!j.is_array()) throw FormatError(path + ": expected an array of frames");
  std::vector<JointPositions> out;
  for (const auto& f : j) out.push_back(parse_positions(f));
  return out;
}

JointPositions read_frame(const std::string& path) { return parse_positions(read_json_file(path)); }

json positions_to_json(const JointPositions& p) {
  json a = json::array();
  for (const auto& v : p.positions) a.push_back({v.x(), v.y(), v.z()});
  return a;
}

}  // namespace posendf::cli
