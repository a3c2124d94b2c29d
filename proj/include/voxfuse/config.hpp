#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxfuse/harness.hpp"
#include "voxfuse/mdu.hpp"
#include "voxfuse/sparseconv.hpp"
#include "voxfuse/voxelgrid.hpp"

namespace voxfuse {

/// Raised for malformed configs, missing referenced files and CLI usage
/// errors. The CLI maps it to exit code 2; everything else exits 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScaleOverride {
  int scale = 0;
  std::optional<std::size_t> gma_l;
  std::optional<double> gma_radius;
};

struct RunConfig {
  std::uint64_t rng_seed = 1;
  int channels = 8;

  std::size_t seeds_per_instance = 50;
  std::size_t k = 6;

  std::size_t gma_l = 2048;
  double gma_radius = 4.0;
  std::vector<ScaleOverride> scale_overrides;

  GridBounds grid;
  std::array<double, 3> base_voxel_size{0.075, 0.075, 0.2};
  int num_scales = 4;

  // Exactly one of these supplies the scene: a directory on disk, or a
  // synthesis recipe. When both are absent the CLI arguments must fill one in.
  std::optional<std::string> scene_dir;
  std::optional<SceneSpec> generate;

  // Optional directory with weight and kernel fixtures; absent means
  // deterministic defaults derived from rng_seed.
  std::optional<std::string> fixtures_dir;

  // Also write per-scale reference-assignment CSVs next to the tensors.
  bool dump_assignments = false;
};

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

/// Parses the compact scene recipe accepted wherever a scene directory is,
/// e.g. "gen:instances=10,points=200,spread=1.0,shape=slab,seed=7".
/// Throws ConfigError on unknown keys or malformed values.
SceneSpec parse_generate_spec(const std::string& text);

/// Every learned-weight stand-in the pipeline consumes. Sizes are fixed by
/// the channel count C: depth_aware C x (C+1), seed_gate 1 x (C+1),
/// point_encoder C x 3, voxel_gate C x C, lc_proj C x 2C. Per scale there is
/// one lidar pyramid kernel plus joint kernels for the three modality groups
/// and a fuse kernel.
struct Fixtures {
  LinearParams point_encoder;
  LinearParams depth_aware;
  LinearParams seed_gate;
  LinearParams voxel_gate;
  LinearParams lc_proj;

  std::vector<ConvKernel> lidar_kernels;
  std::vector<ConvKernel> joint_lidar_kernels;
  std::vector<ConvKernel> joint_camera_kernels;
  std::vector<ConvKernel> joint_both_kernels;
  std::vector<ConvKernel> fuse_kernels;

  void validate(int channels, int num_scales) const;
};

/// Deterministic stand-ins: near-identity kernels with small perturbations
/// and small random linear weights, all derived from `seed`.
Fixtures default_fixtures(std::uint64_t seed, int channels, int num_scales);

void write_fixtures(const Fixtures& fx, const std::string& dir);
Fixtures load_fixtures(const std::string& dir, int channels, int num_scales);

}  // namespace voxfuse
