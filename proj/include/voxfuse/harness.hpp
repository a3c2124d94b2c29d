#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "voxfuse/scene.hpp"

namespace voxfuse {

/// Recipe for a synthetic scene. Geometry, masks and optional feature maps
/// are all derived deterministically from `rng_seed`.
struct SceneSpec {
  enum class Shape {
    Ellipsoid,  // gaussian blobs, generic depth spread
    Slab,       // two parallel sheets 2 m apart, dense planar family
    Plane,      // single sheet with a mild slope, near-zero depth spread
  };

  int instances = 10;
  int points_per_instance = 200;
  double spread = 1.0;
  Shape shape = Shape::Ellipsoid;
  std::uint64_t rng_seed = 1;

  // Image plane and intrinsics of the single generated camera.
  int image_width = 800;
  int image_height = 450;
  double fx = 500.0;
  double fy = 500.0;

  // Channel count of the generated feature map, 0 to skip feature synthesis.
  int feature_channels = 0;
};

struct SyntheticScene {
  Scene scene;
  std::vector<int> instance_of;  // instance id per point
  std::uint64_t rng_seed = 0;
};

/// Builds a deterministic scene from the spec. Every instance is guaranteed a
/// non-empty mask; if the initial camera placement leaves an instance
/// invisible the camera is pulled back and the masks rebuilt, with a bounded
/// number of retries before giving up with an error.
SyntheticScene generate_scene(const SceneSpec& spec);

struct MduReport {
  std::size_t k = 0;
  double mean_error = 0.0;
  double recall = 0.0;
  std::int64_t nvpf = 0;
};

enum class ErrorPairing {
  OwnSeed,        // each held-out point is compared against its own retrievals
  GlobalNearest,  // compared against the nearest virtual point overall
};

/// Depth retrieval quality on a synthetic scene. A deterministic fraction of
/// the reference points is held out per camera; the rest act as depth
/// providers for k-nearest retrieval at the held-out pixels, grouped by
/// instance. `mean_error` is the mean 3D distance between each held-out point
/// and its paired virtual point, `recall` the fraction of held-out points
/// with at least one virtual point within `recall_radius`, and `nvpf` the
/// virtual-point budget the full pipeline would spend on this scene at this k
/// (masks x seeds_per_instance x k, pre-deduplication).
MduReport holdout_eval(const SyntheticScene& scene, double holdout_fraction, std::size_t k,
                       double recall_radius = 0.23, ErrorPairing pairing = ErrorPairing::OwnSeed,
                       std::size_t seeds_per_instance = 50);

struct BenchRow {
  std::size_t m = 0;  // camera voxel count
  std::size_t n = 0;  // lidar voxel count
  double median_ms = 0.0;
  std::vector<double> times_ms;
};

/// Times assign_references on random voxel sets of the requested sizes.
/// Timings are wall-clock and therefore not deterministic; everything else
/// (the generated key sets, the assignment result) is.
std::vector<BenchRow> bench_retrieval(const std::vector<std::pair<std::size_t, std::size_t>>& sizes,
                                      std::size_t l, double radius, int repeats,
                                      std::uint64_t rng_seed = 7);

}  // namespace voxfuse
