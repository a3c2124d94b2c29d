#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voxfuse/config.hpp"
#include "voxfuse/gma.hpp"
#include "voxfuse/scene.hpp"
#include "voxfuse/voxelgrid.hpp"

namespace voxfuse {

/// One pyramid level. Voxel sizes must strictly increase with scale_id; the
/// pipeline enforces doubling so the cascade can chain through downsample.
struct ScaleConfig {
  int scale_id = 0;
  std::array<double, 3> voxel_size{0.075, 0.075, 0.2};
  int channels = 8;
  GmaParams gma;
};

struct MduParams {
  std::size_t seeds_per_instance = 50;
  std::size_t k = 6;
  LinearParams depth_aware;  // C x (C+1)
  LinearParams seed_gate;    // 1 x (C+1)
  std::uint64_t rng_seed = 1;
};

/// The camera branch of one scale: the raw cloud (re-projected per camera to
/// reference points), the per-camera views and the shared MDU parameters.
struct CameraInputs {
  std::span<const Point3> points;
  std::span<const CameraView> views;
  MduParams mdu;
};

struct ScaleStats {
  int scale_id = 0;
  std::int64_t virtual_points = 0;
  std::size_t lidar_voxels = 0;
  std::size_t camera_voxels = 0;
  std::size_t merged_voxels = 0;
  std::size_t fused_voxels = 0;
  std::size_t dropped_virtual_points = 0;
};

/// One scale of the fusion trunk: MDU lifts mask seeds to virtual points,
/// those are voxelized at this scale's resolution and merged with the LiDAR
/// voxels, and the merged tensor runs through gma_conv against the LiDAR
/// reference pool. Returns F_i for the cascade.
SparseVoxelTensor run_scale(const ScaleConfig& scale, const SparseVoxelTensor& lidar_voxels,
                            const CameraInputs& camera_inputs, ScaleStats* stats = nullptr,
                            std::vector<ReferenceAssignment>* assignments_out = nullptr);

/// Fine-to-coarse cascade: out[0] = in[0], out[i+1] = in[i+1] +
/// downsample(out[i]). Throws std::invalid_argument when the geometries do
/// not chain (voxel sizes not doubling, differing origins or channels).
std::vector<SparseVoxelTensor> cascade(const std::vector<SparseVoxelTensor>& per_scale);

/// Dense top-down map over the occupied key rectangle. Row-major with iy as
/// the row, ix as the column, channels innermost; (min_ix, min_iy) anchors
/// grid indices to world voxel keys.
struct BevMap {
  int width = 0;
  int height = 0;
  int channels = 0;
  int min_ix = 0;
  int min_iy = 0;
  std::vector<float> data;

  std::span<const float> at(int ix, int iy) const;
};

/// Height compression: per (ix, iy) column the per-channel maximum over
/// occupied iz; columns with no voxels stay zero.
BevMap flatten_to_bev(const SparseVoxelTensor& t);

struct PipelineMetrics {
  std::int64_t nvpf = 0;  // virtual points generated at scale 0, pre-dedup
  std::size_t dropped_lidar_points = 0;
  std::vector<ScaleStats> scales;
};

struct PipelineResult {
  std::vector<SparseVoxelTensor> fused;  // cascaded multi-modal tensors
  SparseVoxelTensor lidar_top;           // coarsest LiDAR-only pyramid level
  BevMap bev_lidar;
  BevMap bev_multimodal;
  PipelineMetrics metrics;

  // Per-scale reference assignments, filled when the config asks for a dump.
  std::vector<std::vector<ReferenceAssignment>> assignments;

  // Wall-clock stage durations. Diagnostic only; deliberately kept out of the
  // on-disk outputs so identical configs produce identical artifacts.
  std::vector<std::pair<std::string, double>> stage_ms;
};

/// End-to-end run: LiDAR pyramid, per-scale fusion, cascade, BEV compression.
/// Deterministic for a fixed config and scene.
PipelineResult run_pipeline(const RunConfig& cfg, const Scene& scene, const Fixtures& fx);

/// Writes fused_scale_<i>.csv per scale, bev_lidar.bin / bev_multimodal.bin
/// (int32 width, height, channels header + float32 payload, little-endian)
/// and metrics.json into `dir`. Only deterministic values are written; stage
/// wall times go to the diagnostic stream, never into outputs.
void write_pipeline_outputs(const PipelineResult& result, const std::string& dir);

}  // namespace voxfuse
