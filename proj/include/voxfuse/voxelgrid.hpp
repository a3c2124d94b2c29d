#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "voxfuse/geometry.hpp"

namespace voxfuse {

struct VoxelKey {
  int ix = 0;
  int iy = 0;
  int iz = 0;
  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = static_cast<std::uint32_t>(k.ix);
    h = h * 0x9e3779b97f4a7c15ull + static_cast<std::uint32_t>(k.iy);
    h = h * 0x9e3779b97f4a7c15ull + static_cast<std::uint32_t>(k.iz);
    h ^= h >> 32;
    return static_cast<std::size_t>(h);
  }
};

enum class Modality { Lidar, Camera, Both };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// Half-open world-space box [min, max). Points outside are dropped with
/// accounting during voxelization.
struct GridBounds {
  Point3 min{-54.0, -54.0, -5.0};
  Point3 max{54.0, 54.0, 3.0};
  bool contains(const Point3& p) const {
    return p.x >= min.x && p.x < max.x && p.y >= min.y && p.y < max.y && p.z >= min.z &&
           p.z < max.z;
  }
};

/// One occupied voxel. `feature` carries the voxel's primary feature; for a
/// Both entry of a merged (pre-fusion) tensor it is the LiDAR part and
/// `camera_part` holds the camera side, kept separate so gating can use the
/// LiDAR part as reference. Counts record the points behind each part.
struct VoxelEntry {
  std::vector<float> feature;
  std::vector<float> camera_part;
  Modality modality = Modality::Lidar;
  std::int64_t count = 0;
  std::int64_t camera_count = 0;
};

struct SparseVoxelTensor {
  std::array<double, 3> voxel_size{0.075, 0.075, 0.2};
  Point3 origin{};
  GridBounds bounds{};
  int channels = 0;
  std::unordered_map<VoxelKey, VoxelEntry, VoxelKeyHash> entries;

  /// Canonical (sorted) key order; all order-sensitive consumers go through
  /// this so results never depend on hash iteration order.
  std::vector<VoxelKey> sorted_keys() const;
  bool same_geometry(const SparseVoxelTensor& o) const;
  VoxelKey key_of(const Point3& p) const;
  Point3 center_of(const VoxelKey& k) const;
  std::size_t size() const { return entries.size(); }
};

struct VoxelizeResult {
  SparseVoxelTensor tensor;
  std::size_t dropped = 0;
};

/// Bins points into voxels by key = floor((p - origin) / voxel_size); features
/// of co-located points are averaged, counts record contributors. Points
/// outside `bounds` are dropped and counted.
VoxelizeResult voxelize(std::span<const Point3> positions,
                        std::span<const std::vector<float>> features,
                        const std::array<double, 3>& voxel_size, const Point3& origin,
                        Modality modality, const GridBounds& bounds, int channels);

/// Union of the two tensors. Keys present in both become Both entries storing
/// the LiDAR part in `feature` and the camera part in `camera_part`.
SparseVoxelTensor merge_modalities(const SparseVoxelTensor& lidar,
                                   const SparseVoxelTensor& camera);

/// Stride-2 coarsening: key -> floor(key / 2) per axis, count-weighted mean of
/// child features, voxel_size doubled. Modality is inherited when children
/// agree, Both otherwise. Camera parts merge slot-wise where present.
SparseVoxelTensor downsample(const SparseVoxelTensor& t);

/// Voxel addition: union of keys, features summed where keys coincide.
SparseVoxelTensor add(const SparseVoxelTensor& a, const SparseVoxelTensor& b);

/// Test/debug dump: `ix,iy,iz,modality,count,f0..f{c-1}` sorted by key.
std::string dump_csv(const SparseVoxelTensor& t);

}  // namespace voxfuse
