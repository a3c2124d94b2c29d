#include "voxfuse/fusion.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

#include "voxfuse/mdu.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/scene_io.hpp"
#include "voxfuse/sparseconv.hpp"

namespace voxfuse {

namespace {

/// MDU for one camera view: mask seeds, k-nearest depth retrieval against the
/// masked reference points, depth-aware modulation, unprojection.
std::vector<VirtualPoint> lift_view(const CameraView& view, std::span<const Point3> points,
                                    const MduParams& mdu, std::size_t view_index) {
  std::vector<VirtualPoint> out;
  const std::vector<Point3> cloud(points.begin(), points.end());
  const auto refs = project(cloud, view.cam);
  const auto pairs = filter_by_masks(refs, view.masks);
  if (pairs.empty()) return out;

  std::map<int, std::vector<ReferencePoint>> per_instance;
  std::vector<ReferencePoint> masked;
  std::vector<bool> seen(cloud.size(), false);
  for (const auto& [instance_id, ref] : pairs) {
    per_instance[instance_id].push_back(ref);
    if (!seen[ref.source_index]) {
      seen[ref.source_index] = true;
      masked.push_back(ref);
    }
  }

  const auto cdmap = build_depth_aware_features(view.features, masked, mdu.depth_aware);

  std::vector<Seed> seeds;
  std::vector<std::vector<DepthHit>> depths;
  for (const auto& mask : view.masks) {
    const auto it = per_instance.find(mask.instance_id());
    if (mask.empty() || it == per_instance.end()) continue;
    const auto instance_seeds =
        sample_seeds(mask, mdu.seeds_per_instance,
                     derive_seed(mdu.rng_seed, view_index,
                                 static_cast<std::uint64_t>(static_cast<std::uint32_t>(
                                     mask.instance_id()))));
    for (const auto& seed : instance_seeds) {
      seeds.push_back(seed);
      depths.push_back(knn_depths(seed, it->second, mdu.k));
    }
  }
  return modulate_and_unproject(seeds, depths, cdmap, mdu.seed_gate, view.cam);
}

}  // namespace

SparseVoxelTensor run_scale(const ScaleConfig& scale, const SparseVoxelTensor& lidar_voxels,
                            const CameraInputs& camera_inputs, ScaleStats* stats,
                            std::vector<ReferenceAssignment>* assignments_out) {
  if (lidar_voxels.voxel_size != scale.voxel_size)
    throw std::invalid_argument("run_scale: lidar tensor resolution does not match the scale");
  if (lidar_voxels.channels != scale.channels)
    throw std::invalid_argument("run_scale: lidar tensor channels do not match the scale");

  std::vector<Point3> positions;
  std::vector<std::vector<float>> features;
  for (std::size_t v = 0; v < camera_inputs.views.size(); ++v) {
    auto vps = lift_view(camera_inputs.views[v], camera_inputs.points, camera_inputs.mdu, v);
    positions.reserve(positions.size() + vps.size());
    features.reserve(features.size() + vps.size());
    for (auto& vp : vps) {
      positions.push_back(vp.position);
      features.push_back(std::move(vp.feature));
    }
  }

  auto camera_voxels =
      voxelize(positions, features, scale.voxel_size, lidar_voxels.origin, Modality::Camera,
               lidar_voxels.bounds, scale.channels);
  const auto merged = merge_modalities(lidar_voxels, camera_voxels.tensor);
  auto fused = gma_conv(merged, lidar_voxels, scale.gma, assignments_out);

  if (stats != nullptr) {
    stats->scale_id = scale.scale_id;
    stats->virtual_points = static_cast<std::int64_t>(positions.size());
    stats->lidar_voxels = lidar_voxels.size();
    stats->camera_voxels = camera_voxels.tensor.size();
    stats->merged_voxels = merged.size();
    stats->fused_voxels = fused.size();
    stats->dropped_virtual_points = camera_voxels.dropped;
  }
  return fused;
}

std::vector<SparseVoxelTensor> cascade(const std::vector<SparseVoxelTensor>& per_scale) {
  std::vector<SparseVoxelTensor> out;
  out.reserve(per_scale.size());
  for (const auto& fine : per_scale) {
    if (out.empty()) {
      out.push_back(fine);
      continue;
    }
    out.push_back(add(fine, downsample(out.back())));
  }
  return out;
}

std::span<const float> BevMap::at(int ix, int iy) const {
  const int col = ix - min_ix;
  const int row = iy - min_iy;
  if (col < 0 || col >= width || row < 0 || row >= height)
    throw std::out_of_range("BevMap::at: cell outside the map");
  const std::size_t base =
      (static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + col) *
      static_cast<std::size_t>(channels);
  return {data.data() + base, static_cast<std::size_t>(channels)};
}

BevMap flatten_to_bev(const SparseVoxelTensor& t) {
  BevMap bev;
  bev.channels = t.channels;
  if (t.entries.empty()) return bev;

  int min_ix = std::numeric_limits<int>::max();
  int max_ix = std::numeric_limits<int>::min();
  int min_iy = min_ix;
  int max_iy = max_ix;
  for (const auto& [key, entry] : t.entries) {
    min_ix = std::min(min_ix, key.ix);
    max_ix = std::max(max_ix, key.ix);
    min_iy = std::min(min_iy, key.iy);
    max_iy = std::max(max_iy, key.iy);
  }
  bev.min_ix = min_ix;
  bev.min_iy = min_iy;
  bev.width = max_ix - min_ix + 1;
  bev.height = max_iy - min_iy + 1;
  bev.data.assign(static_cast<std::size_t>(bev.width) * bev.height * bev.channels, 0.0f);

  // Column max must see the first occupant as-is; features may be negative,
  // so the zero fill cannot participate in the max.
  std::vector<std::uint8_t> occupied(static_cast<std::size_t>(bev.width) * bev.height, 0);
  for (const auto& [key, entry] : t.entries) {
    const std::size_t cell = static_cast<std::size_t>(key.iy - min_iy) * bev.width +
                             static_cast<std::size_t>(key.ix - min_ix);
    float* dst = bev.data.data() + cell * static_cast<std::size_t>(bev.channels);
    if (occupied[cell] == 0) {
      occupied[cell] = 1;
      std::copy(entry.feature.begin(), entry.feature.end(), dst);
    } else {
      for (int c = 0; c < bev.channels; ++c) dst[c] = std::max(dst[c], entry.feature[c]);
    }
  }
  return bev;
}

PipelineResult run_pipeline(const RunConfig& cfg, const Scene& scene, const Fixtures& fx) {
  if (cfg.num_scales < 1) throw ConfigError("run_pipeline: num_scales must be >= 1");
  if (cfg.channels < 1) throw ConfigError("run_pipeline: channels must be >= 1");
  if (cfg.k < 1 || cfg.seeds_per_instance < 1)
    throw ConfigError("run_pipeline: k and seeds_per_instance must be >= 1");
  fx.validate(cfg.channels, cfg.num_scales);
  for (const auto& view : scene.cameras) {
    if (!view.has_features())
      throw ConfigError("run_pipeline: camera " + view.id + " has no feature map");
    if (view.features.channels != cfg.channels)
      throw ConfigError("run_pipeline: camera " + view.id + " feature channels disagree with config");
  }

  PipelineResult result;
  const auto now = [] { return std::chrono::steady_clock::now(); };
  auto mark = now();
  const auto lap = [&](const std::string& name) {
    const auto t = now();
    result.stage_ms.emplace_back(name, std::chrono::duration<double, std::milli>(t - mark).count());
    mark = t;
  };

  std::vector<std::vector<float>> point_features;
  point_features.reserve(scene.points.size());
  for (const auto& p : scene.points) {
    std::vector<float> f(static_cast<std::size_t>(cfg.channels));
    const std::array<double, 3> xyz{p.x, p.y, p.z};
    for (std::size_t r = 0; r < f.size(); ++r) {
      double acc = fx.point_encoder.bias[r];
      for (std::size_t c = 0; c < 3; ++c)
        acc += fx.point_encoder.weight[r * 3 + c] * xyz[c];
      f[r] = static_cast<float>(acc);
    }
    point_features.push_back(std::move(f));
  }

  auto base = voxelize(scene.points, point_features, cfg.base_voxel_size, Point3{}, Modality::Lidar,
                       cfg.grid, cfg.channels);
  result.metrics.dropped_lidar_points = base.dropped;

  std::vector<SparseVoxelTensor> lidar_pyramid;
  lidar_pyramid.push_back(submanifold_conv(base.tensor, fx.lidar_kernels[0]));
  for (int i = 1; i < cfg.num_scales; ++i)
    lidar_pyramid.push_back(strided_conv(lidar_pyramid.back(), fx.lidar_kernels[i]));
  lap("lidar_pyramid");

  CameraInputs camera_inputs;
  camera_inputs.points = scene.points;
  camera_inputs.views = scene.cameras;
  camera_inputs.mdu = MduParams{cfg.seeds_per_instance, cfg.k, fx.depth_aware, fx.seed_gate,
                                cfg.rng_seed};

  std::vector<SparseVoxelTensor> per_scale;
  for (int i = 0; i < cfg.num_scales; ++i) {
    ScaleConfig sc;
    sc.scale_id = i;
    sc.voxel_size = lidar_pyramid[static_cast<std::size_t>(i)].voxel_size;
    sc.channels = cfg.channels;
    sc.gma.gate = fx.voxel_gate;
    sc.gma.lc_proj = fx.lc_proj;
    sc.gma.joint_lidar = fx.joint_lidar_kernels[static_cast<std::size_t>(i)];
    sc.gma.joint_camera = fx.joint_camera_kernels[static_cast<std::size_t>(i)];
    sc.gma.joint_both = fx.joint_both_kernels[static_cast<std::size_t>(i)];
    sc.gma.fuse = fx.fuse_kernels[static_cast<std::size_t>(i)];
    sc.gma.l = cfg.gma_l;
    sc.gma.radius = cfg.gma_radius;
    for (const auto& ov : cfg.scale_overrides) {
      if (ov.scale != i) continue;
      if (ov.gma_l) sc.gma.l = *ov.gma_l;
      if (ov.gma_radius) sc.gma.radius = *ov.gma_radius;
    }

    ScaleStats stats;
    std::vector<ReferenceAssignment> assignments;
    per_scale.push_back(run_scale(sc, lidar_pyramid[static_cast<std::size_t>(i)], camera_inputs,
                                  &stats, cfg.dump_assignments ? &assignments : nullptr));
    result.metrics.scales.push_back(stats);
    if (cfg.dump_assignments) result.assignments.push_back(std::move(assignments));
    lap("scale_" + std::to_string(i));
  }

  result.metrics.nvpf = result.metrics.scales.front().virtual_points;
  result.fused = cascade(per_scale);
  lap("cascade");
  result.lidar_top = lidar_pyramid.back();
  result.bev_lidar = flatten_to_bev(result.lidar_top);
  result.bev_multimodal = flatten_to_bev(result.fused.back());
  lap("bev");
  return result;
}

void write_pipeline_outputs(const PipelineResult& result, const std::string& dir) {
  ensure_dir(dir);
  for (std::size_t i = 0; i < result.fused.size(); ++i)
    write_text_file(dir + "/fused_scale_" + std::to_string(i) + ".csv",
                    dump_csv(result.fused[i]));
  for (std::size_t i = 0; i < result.assignments.size(); ++i)
    write_text_file(dir + "/assignments_s" + std::to_string(i) + ".csv",
                    dump_assignments(result.assignments[i]));
  write_bev_bin(result.bev_lidar, dir + "/bev_lidar.bin");
  write_bev_bin(result.bev_multimodal, dir + "/bev_multimodal.bin");
  write_text_file(dir + "/metrics.json", metrics_to_json(result));
}

}  // namespace voxfuse
