#include "voxfuse/sparseconv.hpp"

#include <stdexcept>

namespace voxfuse {

ConvKernel ConvKernel::zeros(int extent, int in_channels, int out_channels) {
  ConvKernel k;
  k.extent = extent;
  k.in_channels = in_channels;
  k.out_channels = out_channels;
  k.weights.assign(k.offset_count() * out_channels * in_channels, 0.0);
  k.bias.assign(out_channels, 0.0);
  k.validate();
  return k;
}

ConvKernel ConvKernel::identity(int extent, int channels) {
  ConvKernel k = zeros(extent, channels, channels);
  const std::size_t center = k.offset_count() / 2;
  for (int c = 0; c < channels; ++c) k.weight_at(center, c, c) = 1.0;
  return k;
}

double& ConvKernel::weight_at(std::size_t offset_index, int out_ch, int in_ch) {
  return weights[(offset_index * out_channels + out_ch) * in_channels + in_ch];
}

double ConvKernel::weight_at(std::size_t offset_index, int out_ch, int in_ch) const {
  return weights[(offset_index * out_channels + out_ch) * in_channels + in_ch];
}

void ConvKernel::validate() const {
  if (extent < 1 || extent % 2 == 0)
    throw std::invalid_argument("ConvKernel: extent must be odd and >= 1");
  if (in_channels < 1 || out_channels < 1)
    throw std::invalid_argument("ConvKernel: channel counts must be >= 1");
  if (weights.size() != offset_count() * out_channels * in_channels)
    throw std::invalid_argument("ConvKernel: weight size mismatch");
  if (bias.size() != static_cast<std::size_t>(out_channels))
    throw std::invalid_argument("ConvKernel: bias size mismatch");
}

SparseVoxelTensor submanifold_conv(const SparseVoxelTensor& t, const ConvKernel& k) {
  k.validate();
  if (t.channels != k.in_channels)
    throw std::invalid_argument("submanifold_conv: tensor/kernel channel mismatch");
  SparseVoxelTensor out;
  out.voxel_size = t.voxel_size;
  out.origin = t.origin;
  out.bounds = t.bounds;
  out.channels = k.out_channels;
  out.entries.reserve(t.entries.size());

  const int r = k.extent / 2;
  std::vector<double> acc(k.out_channels);
  for (const VoxelKey& key : t.sorted_keys()) {
    for (int c = 0; c < k.out_channels; ++c) acc[c] = k.bias[c];
    std::size_t offset_index = 0;
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dz = -r; dz <= r; ++dz, ++offset_index) {
          const auto it = t.entries.find({key.ix + dx, key.iy + dy, key.iz + dz});
          if (it == t.entries.end()) continue;
          const std::vector<float>& f = it->second.feature;
          for (int oc = 0; oc < k.out_channels; ++oc) {
            double s = 0.0;
            for (int ic = 0; ic < k.in_channels; ++ic)
              s += k.weight_at(offset_index, oc, ic) * static_cast<double>(f[ic]);
            acc[oc] += s;
          }
        }
      }
    }
    const VoxelEntry& in = t.entries.at(key);
    VoxelEntry e;
    e.modality = in.modality;
    e.count = in.count;
    e.feature.resize(k.out_channels);
    for (int c = 0; c < k.out_channels; ++c) e.feature[c] = static_cast<float>(acc[c]);
    out.entries.emplace(key, std::move(e));
  }
  return out;
}

SparseVoxelTensor strided_conv(const SparseVoxelTensor& t, const ConvKernel& k) {
  return submanifold_conv(downsample(t), k);
}

}  // namespace voxfuse
