#include "voxfuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace voxfuse {

double norm(const Point3& p) { return std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z); }

double distance(const Point3& a, const Point3& b) { return norm(a - b); }

Point3 Mat3::operator*(const Point3& p) const {
  return {m[0] * p.x + m[1] * p.y + m[2] * p.z,
          m[3] * p.x + m[4] * p.y + m[5] * p.z,
          m[6] * p.x + m[7] * p.y + m[8] * p.z};
}

Mat3 Mat3::transposed() const {
  Mat3 t;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t(c, r) = (*this)(r, c);
  return t;
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("Camera: focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: image size must be > 0");
  // R^T R == I within 1e-9
  const Mat3 rt = rotation.transposed();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += rt(r, k) * rotation(k, c);
      const double expect = (r == c) ? 1.0 : 0.0;
      if (std::abs(acc - expect) > 1e-9)
        throw std::invalid_argument("Camera: rotation is not orthonormal");
    }
  }
}

Point3 Camera::to_camera(const Point3& world) const { return rotation * world + translation; }

Point3 Camera::to_world(const Point3& camera) const {
  return rotation.transposed() * (camera - translation);
}

InstanceMask::InstanceMask(int instance_id, std::vector<PixelCell> cells)
    : instance_id_(instance_id), cells_(std::move(cells)) {
  std::sort(cells_.begin(), cells_.end());
  cells_.erase(std::unique(cells_.begin(), cells_.end()), cells_.end());
}

InstanceMask InstanceMask::from_rects(int instance_id,
                                      const std::vector<std::array<int, 4>>& rects,
                                      int image_width, int image_height) {
  std::vector<PixelCell> cells;
  for (const auto& r : rects) {
    const int u0 = std::max(r[0], 0);
    const int v0 = std::max(r[1], 0);
    const int u1 = std::min(r[2], image_width - 1);
    const int v1 = std::min(r[3], image_height - 1);
    for (int v = v0; v <= v1; ++v)
      for (int u = u0; u <= u1; ++u) cells.push_back({u, v});
  }
  return InstanceMask(instance_id, std::move(cells));
}

bool InstanceMask::contains(int u, int v) const {
  return std::binary_search(cells_.begin(), cells_.end(), PixelCell{u, v});
}

std::vector<std::array<int, 4>> InstanceMask::to_rects() const {
  // one inclusive rect per horizontal run
  std::vector<PixelCell> by_row = cells_;
  std::sort(by_row.begin(), by_row.end(),
            [](const PixelCell& a, const PixelCell& b) { return std::tie(a.v, a.u) < std::tie(b.v, b.u); });
  std::vector<std::array<int, 4>> rects;
  std::size_t i = 0;
  while (i < by_row.size()) {
    const int v = by_row[i].v;
    const int u0 = by_row[i].u;
    int u1 = u0;
    ++i;
    while (i < by_row.size() && by_row[i].v == v && by_row[i].u == u1 + 1) {
      u1 = by_row[i].u;
      ++i;
    }
    rects.push_back({u0, v, u1, v});
  }
  return rects;
}

std::vector<ReferencePoint> project(const std::vector<Point3>& points, const Camera& cam) {
  std::vector<ReferencePoint> refs;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point3 pc = cam.to_camera(points[i]);
    if (!(pc.z > 0.0)) continue;
    const double u = cam.fx * pc.x / pc.z + cam.cx;
    const double v = cam.fy * pc.y / pc.z + cam.cy;
    if (u < 0.0 || u >= cam.width || v < 0.0 || v >= cam.height) continue;
    refs.push_back({u, v, pc.z, i});
  }
  return refs;
}

Point3 unproject(double u, double v, double d, const Camera& cam) {
  if (!(d > 0.0)) throw std::invalid_argument("unproject: depth must be > 0, got " + std::to_string(d));
  const Point3 pc{(u - cam.cx) / cam.fx * d, (v - cam.cy) / cam.fy * d, d};
  return cam.to_world(pc);
}

std::vector<std::pair<int, ReferencePoint>> filter_by_masks(
    const std::vector<ReferencePoint>& refs, const std::vector<InstanceMask>& masks) {
  std::vector<std::pair<int, ReferencePoint>> out;
  for (const ReferencePoint& r : refs) {
    const int cu = static_cast<int>(std::floor(r.u));
    const int cv = static_cast<int>(std::floor(r.v));
    for (const InstanceMask& m : masks) {
      if (m.contains(cu, cv)) out.emplace_back(m.instance_id(), r);
    }
  }
  return out;
}

}  // namespace voxfuse
