#pragma once

#include <cstdint>
#include <string>

#include "posendf/manifold.hpp"

namespace posendf {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

/// Writes `path` and a JSON sidecar `path + ".json"`.
///
/// Binary layout (all integers and reals little-endian):
///   bytes 0..3    magic "PNDF"
///   bytes 4..7    u32 format version
///   bytes 8..11   u32 K
///   bytes 12..15  u32 record count
///   records       K*4 f64 quaternion components (w, x, y, z per joint),
///                 f64 distance label, u8 tier
///   trailer       u32 CRC-32 of every preceding byte
///
/// The sidecar carries the skeleton, seed, manifold-spec hash and per-tier
/// counts.
void save_dataset(const PoseDataset& ds, const std::string& path);

/// Throws FormatError (bad magic or inconsistent content), VersionMismatch,
/// TruncatedFile or ChecksumMismatch; IoError when the file cannot be read.
PoseDataset load_dataset(const std::string& path);

std::string sidecar_path(const std::string& path);

}  // namespace posendf
