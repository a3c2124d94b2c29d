#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <utility>
#include <vector>

namespace voxfuse {

/// World-frame 3D position or displacement, meters.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Point3& o) const = default;
};

double norm(const Point3& p);
double distance(const Point3& a, const Point3& b);

/// Row-major 3x3 matrix. Only what the camera model needs.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return Mat3{}; }
  double operator()(int r, int c) const { return m[static_cast<std::size_t>(r) * 3 + c]; }
  double& operator()(int r, int c) { return m[static_cast<std::size_t>(r) * 3 + c]; }
  Point3 operator*(const Point3& p) const;
  Mat3 transposed() const;
};

/// Pinhole camera. `rotation`/`translation` map world to camera frame:
/// p_cam = rotation * p_world + translation.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::identity();
  Point3 translation{};
  int width = 0;
  int height = 0;

  /// Throws std::invalid_argument if focal lengths or image size are
  /// non-positive, or rotation is not orthonormal within 1e-9.
  void validate() const;
  Point3 to_camera(const Point3& world) const;
  Point3 to_world(const Point3& camera) const;
};

/// A real LiDAR point projected onto the image: pixel coordinates plus the
/// measured camera-frame depth it can lend to nearby seeds.
struct ReferencePoint {
  double u = 0.0;
  double v = 0.0;
  double d = 0.0;
  std::size_t source_index = 0;
};

struct PixelCell {
  int u = 0;
  int v = 0;
  auto operator<=>(const PixelCell&) const = default;
};

/// Foreground instance region, stored as a sorted set of integer pixel cells.
class InstanceMask {
 public:
  InstanceMask() = default;
  InstanceMask(int instance_id, std::vector<PixelCell> cells);

  /// Builds a mask from inclusive rectangles [u0,v0,u1,v1], clipped to the
  /// image. Overlapping rects are unioned.
  static InstanceMask from_rects(int instance_id,
                                 const std::vector<std::array<int, 4>>& rects,
                                 int image_width, int image_height);

  int instance_id() const { return instance_id_; }
  const std::vector<PixelCell>& cells() const { return cells_; }
  bool contains(int u, int v) const;
  bool empty() const { return cells_.empty(); }
  std::size_t size() const { return cells_.size(); }

  /// Cells re-encoded as one inclusive rect per row run, for serialization.
  std::vector<std::array<int, 4>> to_rects() const;

 private:
  int instance_id_ = 0;
  std::vector<PixelCell> cells_;  // sorted, unique
};

/// Projects points through the camera; keeps only points with positive
/// camera-frame depth whose pixel lands inside the image. Output is ordered
/// by ascending source_index.
std::vector<ReferencePoint> project(const std::vector<Point3>& points, const Camera& cam);

/// Inverse pinhole map: the world point on the ray through pixel (u, v) at
/// camera depth d. Throws std::invalid_argument for d <= 0.
Point3 unproject(double u, double v, double d, const Camera& cam);

/// Pairs each reference point with every mask containing its pixel cell
/// (floor(u), floor(v)). Points covered by no mask are dropped; points under
/// overlapping masks appear once per mask.
std::vector<std::pair<int, ReferencePoint>> filter_by_masks(
    const std::vector<ReferencePoint>& refs, const std::vector<InstanceMask>& masks);

}  // namespace voxfuse
