#include "voxfuse/gma.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace voxfuse {

namespace {

double key_dist2(const VoxelKey& a, const VoxelKey& b) {
  const double dx = static_cast<double>(a.ix) - b.ix;
  const double dy = static_cast<double>(a.iy) - b.iy;
  const double dz = static_cast<double>(a.iz) - b.iz;
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

std::vector<std::size_t> fps(const std::vector<VoxelKey>& keys, std::size_t l,
                             std::size_t start_index) {
  if (keys.empty()) throw std::invalid_argument("fps: empty key set");
  if (l < 1) throw std::invalid_argument("fps: l must be >= 1");
  if (start_index >= keys.size()) throw std::invalid_argument("fps: start_index out of range");

  const std::size_t take = std::min(l, keys.size());
  std::vector<std::size_t> selected;
  selected.reserve(take);
  std::vector<double> min_dist2(keys.size(), std::numeric_limits<double>::infinity());

  std::size_t current = start_index;
  selected.push_back(current);
  for (std::size_t round = 1; round < take; ++round) {
    std::size_t best = 0;
    double best_dist2 = -1.0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const double d2 = std::min(min_dist2[i], key_dist2(keys[i], keys[current]));
      min_dist2[i] = d2;
      if (d2 > best_dist2) {
        best_dist2 = d2;
        best = i;
      }
    }
    current = best;
    selected.push_back(current);
  }
  return selected;
}

std::vector<ReferenceAssignment> assign_references(const SparseVoxelTensor& camera,
                                                   const SparseVoxelTensor& lidar, std::size_t l,
                                                   double radius) {
  if (l < 1) throw std::invalid_argument("assign_references: l must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("assign_references: radius must be > 0");

  const std::vector<VoxelKey> camera_keys = camera.sorted_keys();
  std::vector<ReferenceAssignment> assignments(camera_keys.size());
  for (std::size_t i = 0; i < camera_keys.size(); ++i) assignments[i].camera_key = camera_keys[i];
  if (camera_keys.empty() || lidar.entries.empty()) return assignments;

  const std::vector<VoxelKey> lidar_keys = lidar.sorted_keys();

  // (1) subsample camera voxels; sorted keys make index 0 the smallest key
  const std::vector<std::size_t> samples = fps(camera_keys, l, 0);

  // (2) exact nearest LiDAR voxel per sample
  std::vector<VoxelKey> sample_ref(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const VoxelKey& q = camera_keys[samples[s]];
    double best = std::numeric_limits<double>::infinity();
    VoxelKey best_key = lidar_keys.front();
    for (const VoxelKey& lk : lidar_keys) {
      const double d2 = key_dist2(q, lk);
      if (d2 < best) {  // lidar_keys sorted, so first hit wins distance ties
        best = d2;
        best_key = lk;
      }
    }
    sample_ref[s] = best_key;
  }

  // (3) distribute each sample's reference within its ball
  const double radius2 = radius * radius;
  for (std::size_t i = 0; i < camera_keys.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_sample = 0;
    bool covered = false;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const double d2 = key_dist2(camera_keys[i], camera_keys[samples[s]]);
      if (d2 > radius2) continue;
      if (!covered || d2 < best) {  // ties keep the smaller sample index
        covered = true;
        best = d2;
        best_sample = s;
      }
    }
    if (covered) {
      assignments[i].lidar_key = sample_ref[best_sample];
      assignments[i].via_sample = best_sample;
    }
  }
  return assignments;
}

std::vector<float> gate_camera(std::span<const float> camera_feature,
                               std::span<const float> lidar_reference,
                               const LinearParams& params) {
  if (params.out != camera_feature.size() || params.in != lidar_reference.size())
    throw std::invalid_argument("gate_camera: params shape mismatch");
  std::vector<float> out(camera_feature.size());
  for (std::size_t r = 0; r < params.out; ++r) {
    const double g = std::max(0.0, params.row_dot(r, lidar_reference, {}));
    out[r] = static_cast<float>(g * static_cast<double>(camera_feature[r]));
  }
  return out;
}

namespace {

SparseVoxelTensor empty_like(const SparseVoxelTensor& t) {
  SparseVoxelTensor out;
  out.voxel_size = t.voxel_size;
  out.origin = t.origin;
  out.bounds = t.bounds;
  out.channels = t.channels;
  return out;
}

std::vector<float> project_pair(const LinearParams& proj, std::span<const float> lidar_part,
                                std::span<const float> gated_camera) {
  if (proj.out != lidar_part.size() || proj.in != lidar_part.size() + gated_camera.size())
    throw std::invalid_argument("gma_conv: lc_proj shape mismatch");
  std::vector<float> out(proj.out);
  for (std::size_t r = 0; r < proj.out; ++r) {
    const double* w = proj.weight.data() + r * proj.in;
    double acc = proj.bias[r];
    for (std::size_t i = 0; i < lidar_part.size(); ++i)
      acc += w[i] * static_cast<double>(lidar_part[i]);
    for (std::size_t i = 0; i < gated_camera.size(); ++i)
      acc += w[lidar_part.size() + i] * static_cast<double>(gated_camera[i]);
    out[r] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace

SparseVoxelTensor gma_conv(const SparseVoxelTensor& merged, const SparseVoxelTensor& lidar,
                           const GmaParams& params,
                           std::vector<ReferenceAssignment>* assignments_out) {
  if (assignments_out != nullptr) assignments_out->clear();

  // group by modality
  SparseVoxelTensor group_lidar = empty_like(merged);
  SparseVoxelTensor group_camera = empty_like(merged);
  SparseVoxelTensor group_both = empty_like(merged);
  for (const auto& [key, e] : merged.entries) {
    switch (e.modality) {
      case Modality::Lidar: group_lidar.entries.emplace(key, e); break;
      case Modality::Camera: group_camera.entries.emplace(key, e); break;
      case Modality::Both: group_both.entries.emplace(key, e); break;
    }
  }

  // select: gate camera-only voxels under their assigned LiDAR references
  if (!group_camera.entries.empty()) {
    const auto assignments = assign_references(group_camera, lidar, params.l, params.radius);
    for (const ReferenceAssignment& a : assignments) {
      if (!a.lidar_key) continue;  // uncovered voxels pass through ungated
      const VoxelEntry& ref = lidar.entries.at(*a.lidar_key);
      VoxelEntry& e = group_camera.entries.at(a.camera_key);
      e.feature = gate_camera(e.feature, ref.feature, params.gate);
    }
    if (assignments_out != nullptr) *assignments_out = assignments;
  }

  // combined voxels gate their camera part with the co-located LiDAR part,
  // then fold the pair back to the common width
  for (auto& [key, e] : group_both.entries) {
    const std::vector<float> gated = gate_camera(e.camera_part, e.feature, params.gate);
    e.feature = project_pair(params.lc_proj, e.feature, gated);
    e.camera_part.clear();
    e.camera_count = 0;
  }

  // aggregate: per-group convolution into the joint space, voxel addition,
  // then the fusing convolution over the union active set
  SparseVoxelTensor joint = empty_like(merged);
  joint.channels = params.fuse.in_channels;
  if (!group_lidar.entries.empty())
    joint = add(joint, submanifold_conv(group_lidar, params.joint_lidar));
  if (!group_camera.entries.empty())
    joint = add(joint, submanifold_conv(group_camera, params.joint_camera));
  if (!group_both.entries.empty())
    joint = add(joint, submanifold_conv(group_both, params.joint_both));
  if (joint.entries.empty()) return joint;
  return submanifold_conv(joint, params.fuse);
}

std::string dump_assignments(const std::vector<ReferenceAssignment>& assignments) {
  std::string out = "cu,cv,cw,lu,lv,lw,via_sample\n";
  for (const ReferenceAssignment& a : assignments) {
    out += std::to_string(a.camera_key.ix) + "," + std::to_string(a.camera_key.iy) + "," +
           std::to_string(a.camera_key.iz) + ",";
    if (a.lidar_key)
      out += std::to_string(a.lidar_key->ix) + "," + std::to_string(a.lidar_key->iy) + "," +
             std::to_string(a.lidar_key->iz);
    else
      out += ",,";
    out += ",";
    if (a.via_sample) out += std::to_string(*a.via_sample);
    out += "\n";
  }
  return out;
}

}  // namespace voxfuse
