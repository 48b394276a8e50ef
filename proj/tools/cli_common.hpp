#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "posendf/manifold.hpp"
#include "posendf/projector.hpp"
#include "posendf/skeleton.hpp"
#include "posendf/tasks.hpp"

namespace posendf::cli {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Exit codes, one per error family.
enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kFormat = 5,
  kVersion = 6,
  kTruncated = 7,
  kChecksum = 8,
  kDimension = 9,
  kNumerical = 10,
  kInsufficientData = 11,
  kDegenerate = 12,
  kSampling = 13,
};

/// Maps the in-flight exception to an exit code and a structured error.
int report_current_exception(const std::string& command);

/// The --config file, or an empty object. Sections are looked up by name.
json load_config(const std::optional<std::string>& path);
json section(const json& config, const char* name);

/// Value of `flag` when set, else config[key], else `fallback`.
template <typename T>
T pick(const std::optional<T>& flag, const json& config, const char* key, T fallback) {
  if (flag) return *flag;
  if (config.contains(key)) return config.at(key).get<T>();
  return fallback;
}

void print_summary(const json& summary);

/// First record of a dataset file, or the one at `index`.
Pose read_pose(const std::string& path, std::size_t index = 0);

/// Poses of a dataset file with their labels.
PoseDataset read_poses(const std::string& path);

/// Writes `poses` as a dataset file; every record is labeled as a manifold
/// pose unless `labels_from` supplies per-record labels.
void write_poses(
    const std::string& path,
    const SkeletonTopology& skel,
    const std::vector<Pose>& poses,
    std::uint64_t seed,
    const PoseDataset* labels_from = nullptr);

/// A single frame as an array of K [x, y, z]; null entries read as zero.
JointPositions parse_positions(const json& frame);
/// A sequence: an array of frames.
std::vector<JointPositions> read_observations(const std::string& path);
JointPositions read_frame(const std::string& path);

json positions_to_json(const JointPositions& p);

}  // namespace posendf::cli
