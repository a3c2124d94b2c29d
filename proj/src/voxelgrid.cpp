#include "voxfuse/voxelgrid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace voxfuse {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::Lidar: return "lidar";
    case Modality::Camera: return "camera";
    case Modality::Both: return "both";
  }
  return "?";
}

Modality modality_from_string(const std::string& s) {
  if (s == "lidar") return Modality::Lidar;
  if (s == "camera") return Modality::Camera;
  if (s == "both") return Modality::Both;
  throw std::invalid_argument("unknown modality: " + s);
}

std::vector<VoxelKey> SparseVoxelTensor::sorted_keys() const {
  std::vector<VoxelKey> keys;
  keys.reserve(entries.size());
  for (const auto& [k, _] : entries) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  return keys;
}

bool SparseVoxelTensor::same_geometry(const SparseVoxelTensor& o) const {
  return voxel_size == o.voxel_size && origin == o.origin && channels == o.channels;
}

VoxelKey SparseVoxelTensor::key_of(const Point3& p) const {
  return {static_cast<int>(std::floor((p.x - origin.x) / voxel_size[0])),
          static_cast<int>(std::floor((p.y - origin.y) / voxel_size[1])),
          static_cast<int>(std::floor((p.z - origin.z) / voxel_size[2]))};
}

Point3 SparseVoxelTensor::center_of(const VoxelKey& k) const {
  return {origin.x + (k.ix + 0.5) * voxel_size[0], origin.y + (k.iy + 0.5) * voxel_size[1],
          origin.z + (k.iz + 0.5) * voxel_size[2]};
}

VoxelizeResult voxelize(std::span<const Point3> positions,
                        std::span<const std::vector<float>> features,
                        const std::array<double, 3>& voxel_size, const Point3& origin,
                        Modality modality, const GridBounds& bounds, int channels) {
  if (!(voxel_size[0] > 0.0 && voxel_size[1] > 0.0 && voxel_size[2] > 0.0))
    throw std::invalid_argument("voxelize: voxel_size components must be > 0");
  if (positions.size() != features.size())
    throw std::invalid_argument("voxelize: positions/features size mismatch");

  VoxelizeResult res;
  SparseVoxelTensor& t = res.tensor;
  t.voxel_size = voxel_size;
  t.origin = origin;
  t.bounds = bounds;
  t.channels = channels;

  struct Accum {
    std::vector<double> sum;
    std::int64_t count = 0;
  };
  std::unordered_map<VoxelKey, Accum, VoxelKeyHash> acc;
  acc.reserve(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!bounds.contains(positions[i])) {
      ++res.dropped;
      continue;
    }
    if (features[i].size() != static_cast<std::size_t>(channels))
      throw std::invalid_argument("voxelize: feature width mismatch");
    Accum& a = acc[t.key_of(positions[i])];
    if (a.sum.empty()) a.sum.assign(channels, 0.0);
    for (int c = 0; c < channels; ++c) a.sum[c] += features[i][c];
    ++a.count;
  }
  t.entries.reserve(acc.size());
  for (auto& [key, a] : acc) {
    VoxelEntry e;
    e.modality = modality;
    e.count = a.count;
    e.feature.resize(channels);
    for (int c = 0; c < channels; ++c)
      e.feature[c] = static_cast<float>(a.sum[c] / static_cast<double>(a.count));
    t.entries.emplace(key, std::move(e));
  }
  return res;
}

SparseVoxelTensor merge_modalities(const SparseVoxelTensor& lidar,
                                   const SparseVoxelTensor& camera) {
  if (!lidar.same_geometry(camera))
    throw std::invalid_argument("merge_modalities: tensors disagree on geometry or channels");
  SparseVoxelTensor out = lidar;
  for (const auto& [key, cam_entry] : camera.entries) {
    auto it = out.entries.find(key);
    if (it == out.entries.end()) {
      out.entries.emplace(key, cam_entry);
    } else {
      VoxelEntry& e = it->second;
      e.modality = Modality::Both;
      e.camera_part = cam_entry.feature;
      e.camera_count = cam_entry.count;
    }
  }
  return out;
}

namespace {

int floor_div2(int v) { return v >= 0 ? v / 2 : (v - 1) / 2; }

}  // namespace

SparseVoxelTensor downsample(const SparseVoxelTensor& t) {
  SparseVoxelTensor out;
  out.voxel_size = {t.voxel_size[0] * 2.0, t.voxel_size[1] * 2.0, t.voxel_size[2] * 2.0};
  out.origin = t.origin;
  out.bounds = t.bounds;
  out.channels = t.channels;

  struct Accum {
    std::vector<double> sum;
    std::vector<double> camera_sum;
    std::int64_t count = 0;
    std::int64_t camera_count = 0;
    Modality modality = Modality::Lidar;
    bool first = true;
    bool mixed = false;
  };
  std::unordered_map<VoxelKey, Accum, VoxelKeyHash> acc;
  acc.reserve(t.entries.size());
  // deterministic accumulation order
  for (const VoxelKey& key : t.sorted_keys()) {
    const VoxelEntry& e = t.entries.at(key);
    const VoxelKey parent{floor_div2(key.ix), floor_div2(key.iy), floor_div2(key.iz)};
    Accum& a = acc[parent];
    if (a.sum.empty()) a.sum.assign(t.channels, 0.0);
    const double w = static_cast<double>(e.count);
    for (int c = 0; c < t.channels; ++c) a.sum[c] += w * e.feature[c];
    a.count += e.count;
    if (!e.camera_part.empty()) {
      if (a.camera_sum.empty()) a.camera_sum.assign(t.channels, 0.0);
      const double cw = static_cast<double>(e.camera_count);
      for (int c = 0; c < t.channels; ++c) a.camera_sum[c] += cw * e.camera_part[c];
      a.camera_count += e.camera_count;
    }
    if (a.first) {
      a.modality = e.modality;
      a.first = false;
    } else if (a.modality != e.modality) {
      a.mixed = true;
    }
  }
  out.entries.reserve(acc.size());
  for (auto& [key, a] : acc) {
    VoxelEntry e;
    e.modality = a.mixed ? Modality::Both : a.modality;
    e.count = a.count;
    e.feature.resize(t.channels);
    for (int c = 0; c < t.channels; ++c)
      e.feature[c] = static_cast<float>(a.sum[c] / static_cast<double>(a.count));
    if (!a.camera_sum.empty() && a.camera_count > 0) {
      e.camera_count = a.camera_count;
      e.camera_part.resize(t.channels);
      for (int c = 0; c < t.channels; ++c)
        e.camera_part[c] = static_cast<float>(a.camera_sum[c] / static_cast<double>(a.camera_count));
    }
    out.entries.emplace(key, std::move(e));
  }
  return out;
}

SparseVoxelTensor add(const SparseVoxelTensor& a, const SparseVoxelTensor& b) {
  if (!a.same_geometry(b))
    throw std::invalid_argument("add: tensors disagree on geometry or channels");
  SparseVoxelTensor out = a;
  for (const auto& [key, be] : b.entries) {
    auto it = out.entries.find(key);
    if (it == out.entries.end()) {
      out.entries.emplace(key, be);
    } else {
      VoxelEntry& e = it->second;
      for (int c = 0; c < out.channels; ++c)
        e.feature[c] = static_cast<float>(static_cast<double>(e.feature[c]) +
                                          static_cast<double>(be.feature[c]));
      e.count += be.count;
      if (e.modality != be.modality) e.modality = Modality::Both;
    }
  }
  return out;
}

std::string dump_csv(const SparseVoxelTensor& t) {
  std::string out = "ix,iy,iz,modality,count";
  for (int c = 0; c < t.channels; ++c) out += ",f" + std::to_string(c);
  out += "\n";
  char buf[64];
  for (const VoxelKey& key : t.sorted_keys()) {
    const VoxelEntry& e = t.entries.at(key);
    out += std::to_string(key.ix) + "," + std::to_string(key.iy) + "," + std::to_string(key.iz);
    out += "," + to_string(e.modality) + "," + std::to_string(e.count);
    for (int c = 0; c < t.channels; ++c) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), e.feature[c]);
      out += ",";
      out.append(buf, end);
    }
    out += "\n";
  }
  return out;
}

}  // namespace voxfuse
