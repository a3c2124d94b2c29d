#pragma once

#include <string>
#include <vector>

#include "voxfuse/config.hpp"
#include "voxfuse/fusion.hpp"
#include "voxfuse/harness.hpp"
#include "voxfuse/scene.hpp"

namespace voxfuse {

// Filesystem helpers. Read failures and malformed content raise ConfigError
// with the offending path in the message.
void ensure_dir(const std::string& dir);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// Scene directory layout: `points.csv` (x,y,z rows, meters), per camera
/// `camera_<id>.json`, `masks_<id>.json` and optional `features_<id>.bin`.
/// Cameras are discovered by filename and loaded in sorted id order.
Scene load_scene(const std::string& dir);
void write_scene(const Scene& scene, const std::string& dir);

/// Flat binary feature grid: width, height, channels as little-endian int32,
/// then row-major float32 with channels innermost.
FeatureMap load_feature_bin(const std::string& path);
void write_feature_bin(const FeatureMap& fm, const std::string& path);

/// Same header convention as feature files, preceded by no extra metadata;
/// the (min_ix, min_iy) anchor travels in metrics.json instead.
void write_bev_bin(const BevMap& bev, const std::string& path);
BevMap load_bev_bin(const std::string& path);

/// Linear fixture: {"out", "in", "weight" (row-major flat), "bias"}.
LinearParams load_params_json(const std::string& path);
void write_params_json(const LinearParams& p, const std::string& path);

/// Kernel fixture: {"extent", "in_channels", "out_channels", "weights", "bias"}
/// where weights[k] is the row-major out x in block of the k-th offset in
/// lexicographic (dx, dy, dz) order.
ConvKernel load_kernel_json(const std::string& path);
void write_kernel_json(const ConvKernel& k, const std::string& path);

std::string metrics_to_json(const PipelineResult& result);

/// CSV with header `k,mean_error,recall,nvpf`, one row per evaluated K.
std::string mdu_reports_csv(const std::vector<MduReport>& reports);

/// CSV with header `m,n,repeats,median_ms,min_ms,max_ms`.
std::string bench_rows_csv(const std::vector<BenchRow>& rows);

}  // namespace voxfuse
