#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxfuse/mdu.hpp"
#include "voxfuse/sparseconv.hpp"
#include "voxfuse/voxelgrid.hpp"

namespace voxfuse {

/// Which LiDAR voxel a camera voxel uses as gating reference, and the sampled
/// voxel that distributed it. Both empty when no ball covered the voxel or
/// the LiDAR tensor was empty.
struct ReferenceAssignment {
  VoxelKey camera_key{};
  std::optional<VoxelKey> lidar_key;
  std::optional<std::size_t> via_sample;
};

/// Farthest point sampling over voxel keys in index space, starting from
/// keys[start_index]. Returns min(l, |keys|) indices in selection order;
/// distance ties resolve to the smallest index.
std::vector<std::size_t> fps(const std::vector<VoxelKey>& keys, std::size_t l,
                             std::size_t start_index);

/// The select step's retrieval: FPS-subsample `l` camera voxels, find each
/// sample's exact nearest LiDAR voxel, then distribute that reference to every
/// camera voxel within `radius` (in voxel units) of the sample. A voxel
/// covered by several balls takes the nearest sample, ties by smaller sample
/// index. Costs O(l * (M + N)) instead of the exhaustive O(M * N).
/// Results are ordered by camera key.
std::vector<ReferenceAssignment> assign_references(const SparseVoxelTensor& camera,
                                                   const SparseVoxelTensor& lidar, std::size_t l,
                                                   double radius);

/// ReLU(weight * lidar_reference + bias) applied elementwise to the camera
/// feature. Params must map lidar channels to camera channels.
std::vector<float> gate_camera(std::span<const float> camera_feature,
                               std::span<const float> lidar_reference,
                               const LinearParams& params);

/// Fixture bundle for one GMA-Conv block.
struct GmaParams {
  LinearParams gate;     // camera channels x lidar channels
  LinearParams lc_proj;  // channels x 2*channels, folds [lidar ; gated camera]
  ConvKernel joint_lidar;
  ConvKernel joint_camera;
  ConvKernel joint_both;
  ConvKernel fuse;
  std::size_t l = 2048;
  double radius = 4.0;
};

/// The select-then-aggregate block: camera-only voxels are gated by their
/// assigned LiDAR references (pass-through when unassigned), combined voxels
/// gate their camera part with the co-located LiDAR part and are projected
/// back to the common width, then the three groups run through their own
/// submanifold convolutions, meet via voxel addition on the union active set,
/// and pass through the fuse convolution.
SparseVoxelTensor gma_conv(const SparseVoxelTensor& merged, const SparseVoxelTensor& lidar,
                           const GmaParams& params,
                           std::vector<ReferenceAssignment>* assignments_out = nullptr);

/// Debug dump: `cu,cv,cw,lu,lv,lw,via_sample` per assignment, blanks for none.
std::string dump_assignments(const std::vector<ReferenceAssignment>& assignments);

}  // namespace voxfuse
