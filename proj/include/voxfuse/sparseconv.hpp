#pragma once

#include <cstddef>
#include <vector>

#include "voxfuse/voxelgrid.hpp"

namespace voxfuse {

/// 3D convolution kernel over an odd cubic extent. Weights are stored
/// offset-major in lexicographic (dx, dy, dz) order, each offset holding a
/// row-major out x in matrix; the output at a voxel gathers the input at
/// voxel + offset (cross-correlation convention).
struct ConvKernel {
  int extent = 3;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weights;  // extent^3 * out * in
  std::vector<double> bias;     // out

  static ConvKernel zeros(int extent, int in_channels, int out_channels);
  /// Center-offset identity, zeros elsewhere; requires in == out.
  static ConvKernel identity(int extent, int channels);

  std::size_t offset_count() const {
    return static_cast<std::size_t>(extent) * extent * extent;
  }
  double& weight_at(std::size_t offset_index, int out_ch, int in_ch);
  double weight_at(std::size_t offset_index, int out_ch, int in_ch) const;
  void validate() const;
};

/// Submanifold sparse convolution: the output active set equals the input
/// active set; each output voxel sums kernel-weighted features of its active
/// neighbors plus bias. Offsets accumulate in lexicographic order.
SparseVoxelTensor submanifold_conv(const SparseVoxelTensor& t, const ConvKernel& k);

/// Stride-2 convolution for the toy feature pyramid: the input is pooled to
/// coarse keys floor(key / 2) (count-weighted window mean), then the kernel
/// runs over the coarse active set. Output keys are exactly the coarse keys
/// covered by the input.
SparseVoxelTensor strided_conv(const SparseVoxelTensor& t, const ConvKernel& k);

}  // namespace voxfuse
