#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "voxfuse/geometry.hpp"

namespace voxfuse {

/// A pixel sampled from an instance mask, waiting to be lifted to 3D.
struct Seed {
  double u = 0.0;
  double v = 0.0;
  int instance_id = 0;
};

/// Dense per-pixel feature grid, row-major with channels innermost.
struct FeatureMap {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  static FeatureMap zeros(int width, int height, int channels);
  std::span<const float> at(int u, int v) const;
  std::span<float> at(int u, int v);
};

/// Image features fused with the sparse reference-depth map.
using DepthAwareFeatureMap = FeatureMap;

/// Explicit weight/bias for every map the reference network would learn.
/// Weight is out x in, row-major. Arithmetic runs in double.
struct LinearParams {
  std::size_t out = 0;
  std::size_t in = 0;
  std::vector<double> weight;  // row-major, out*in
  std::vector<double> bias;    // out

  static LinearParams zeros(std::size_t out, std::size_t in);
  double row_dot(std::size_t r, std::span<const float> a, std::span<const double> extra) const;
};

struct VirtualPoint {
  Point3 position{};
  std::vector<float> feature;
  std::size_t seed_index = 0;
  int depth_rank = 0;
};

struct DepthHit {
  double depth = 0.0;
  std::size_t ref_index = 0;
};

/// Uniform seeds from the mask's cells: without replacement when the mask has
/// at least n cells, with replacement otherwise. Deterministic in rng_seed.
/// Throws std::invalid_argument for an empty mask or n < 1.
std::vector<Seed> sample_seeds(const InstanceMask& mask, std::size_t n, std::uint64_t rng_seed);

/// The min(k, |refs|) reference points nearest to the seed in 2D pixel
/// distance, ascending by distance, ties by ascending ref index.
/// Throws std::invalid_argument for empty refs or k < 1.
std::vector<DepthHit> knn_depths(const Seed& seed, const std::vector<ReferencePoint>& refs,
                                 std::size_t k);

/// Per pixel: weight * [image feature ; sparse depth] + bias, where the
/// sparse depth at a cell is the smallest depth of any reference point
/// falling there, or 0 when none does. Weight must be channels x (channels+1).
DepthAwareFeatureMap build_depth_aware_features(const FeatureMap& cmap,
                                                const std::vector<ReferencePoint>& refs,
                                                const LinearParams& params);

/// Lifts every (seed, depth) pair to a virtual point: position from
/// unprojection, feature from the depth-aware map scaled by the per-depth
/// sigmoid gate. gate_params must be 1 x (channels+1). Output is ordered by
/// seed, then depth rank; its size is the sum of per-seed depth counts.
std::vector<VirtualPoint> modulate_and_unproject(const std::vector<Seed>& seeds,
                                                 const std::vector<std::vector<DepthHit>>& depths_per_seed,
                                                 const DepthAwareFeatureMap& cdmap,
                                                 const LinearParams& gate_params,
                                                 const Camera& cam);

/// Pre-deduplication virtual point count: instances * seeds_per_instance * k.
std::int64_t count_nvpf(std::int64_t instances, std::int64_t seeds_per_instance, std::int64_t k);

}  // namespace voxfuse
