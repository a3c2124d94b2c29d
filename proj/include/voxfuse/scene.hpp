#pragma once

#include <string>
#include <vector>

#include "voxfuse/geometry.hpp"
#include "voxfuse/mdu.hpp"

namespace voxfuse {

/// One camera's view of a scene. `features` may be empty (width 0) when the
/// scene ships without per-camera feature fixtures, e.g. for depth-only
/// evaluation.
struct CameraView {
  std::string id;
  Camera cam;
  std::vector<InstanceMask> masks;
  FeatureMap features;

  bool has_features() const { return features.width > 0 && features.height > 0; }
};

struct Scene {
  std::vector<Point3> points;
  std::vector<CameraView> cameras;
};

}  // namespace voxfuse
