#include "voxfuse/harness.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "voxfuse/gma.hpp"
#include "voxfuse/mdu.hpp"
#include "voxfuse/rng.hpp"

namespace voxfuse {

namespace {

double cross2(const std::array<double, 2>& o, const std::array<double, 2>& a,
              const std::array<double, 2>& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

std::vector<std::array<double, 2>> convex_hull(std::vector<std::array<double, 2>> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  std::vector<std::array<double, 2>> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool inside_hull(const std::vector<std::array<double, 2>>& hull, double u, double v) {
  const std::size_t n = hull.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (cross2(hull[i], hull[(i + 1) % n], {u, v}) < -1e-9) return false;
  }
  return true;
}

/// Mask = floor cells of the projections, plus every cell whose center lies
/// in their convex hull, dilated by one cell and clipped to the image. The
/// direct cells guarantee that every projection stays inside its own mask.
InstanceMask mask_from_projections(int instance_id, const std::vector<ReferencePoint>& refs,
                                   int width, int height) {
  std::vector<PixelCell> cells;
  for (const auto& r : refs)
    cells.push_back({static_cast<int>(std::floor(r.u)), static_cast<int>(std::floor(r.v))});

  if (refs.size() >= 3) {
    std::vector<std::array<double, 2>> uv;
    uv.reserve(refs.size());
    for (const auto& r : refs) uv.push_back({r.u, r.v});
    const auto hull = convex_hull(std::move(uv));
    if (hull.size() >= 3) {
      double min_u = hull[0][0], max_u = hull[0][0], min_v = hull[0][1], max_v = hull[0][1];
      for (const auto& h : hull) {
        min_u = std::min(min_u, h[0]);
        max_u = std::max(max_u, h[0]);
        min_v = std::min(min_v, h[1]);
        max_v = std::max(max_v, h[1]);
      }
      for (int v = static_cast<int>(std::floor(min_v)); v <= static_cast<int>(max_v); ++v) {
        for (int u = static_cast<int>(std::floor(min_u)); u <= static_cast<int>(max_u); ++u) {
          if (inside_hull(hull, u + 0.5, v + 0.5)) cells.push_back({u, v});
        }
      }
    }
  }

  std::vector<PixelCell> dilated;
  dilated.reserve(cells.size() * 9);
  for (const auto& c : cells) {
    for (int dv = -1; dv <= 1; ++dv) {
      for (int du = -1; du <= 1; ++du) {
        const int u = c.u + du;
        const int v = c.v + dv;
        if (u >= 0 && u < width && v >= 0 && v < height) dilated.push_back({u, v});
      }
    }
  }
  return InstanceMask(instance_id, std::move(dilated));
}

}  // namespace

SyntheticScene generate_scene(const SceneSpec& spec) {
  if (spec.instances < 1 || spec.points_per_instance < 1)
    throw std::invalid_argument("generate_scene: counts must be >= 1");
  if (spec.image_width < 1 || spec.image_height < 1 || spec.fx <= 0.0 || spec.fy <= 0.0)
    throw std::invalid_argument("generate_scene: invalid camera settings");

  SyntheticScene out;
  out.rng_seed = spec.rng_seed;

  // World frame: x forward (viewing direction), y left, z up. Instances sit
  // 12 to 28 m ahead so they stay inside the default voxel grid bounds.
  for (int i = 0; i < spec.instances; ++i) {
    Rng rng(derive_seed(spec.rng_seed, 0xB0D7, static_cast<std::uint64_t>(i)));
    const Point3 center{rng.uniform(12.0, 28.0), rng.uniform(-4.0, 4.0), rng.uniform(-1.5, 1.5)};
    const double h = 1.2 * spec.spread;

    std::array<double, 3> axes{};
    if (spec.shape == SceneSpec::Shape::Ellipsoid)
      axes = {spec.spread * rng.uniform(0.5, 1.5), spec.spread * rng.uniform(0.5, 1.5),
              spec.spread * rng.uniform(0.5, 1.5)};

    for (int p = 0; p < spec.points_per_instance; ++p) {
      Point3 pt;
      switch (spec.shape) {
        case SceneSpec::Shape::Ellipsoid:
          pt = center + Point3{axes[0] * rng.normal(), axes[1] * rng.normal(),
                               axes[2] * rng.normal()};
          break;
        case SceneSpec::Shape::Slab: {
          // Two sheets one metre before and behind the centre, so every
          // camera ray through the instance crosses two distinct depths.
          const double dx = rng.uniform01() < 0.5 ? -1.0 : 1.0;
          pt = center + Point3{dx, rng.uniform(-h, h), rng.uniform(-h, h)};
          break;
        }
        case SceneSpec::Shape::Plane: {
          // A vertical sheet facing the camera, tilted just enough that the
          // depth varies with height instead of being exactly constant.
          const double dz = rng.uniform(-h, h);
          pt = center + Point3{0.05 * dz, rng.uniform(-h, h), dz};
          break;
        }
      }
      out.scene.points.push_back(pt);
      out.instance_of.push_back(i);
    }
  }

  CameraView view;
  view.id = "0";
  view.cam.fx = spec.fx;
  view.cam.fy = spec.fy;
  view.cam.cx = spec.image_width / 2.0;
  view.cam.cy = spec.image_height / 2.0;
  view.cam.width = spec.image_width;
  view.cam.height = spec.image_height;
  // Camera at the origin looking along world +x: optical axis = x, image
  // right = -y, image down = -z.
  view.cam.rotation = Mat3{0.0, -1.0, 0.0,
                           0.0, 0.0, -1.0,
                           1.0, 0.0, 0.0};
  view.cam.validate();

  const int max_attempts = 16;
  bool visible = false;
  for (int attempt = 0; attempt < max_attempts && !visible; ++attempt) {
    view.cam.translation = {0.0, 0.0, 2.0 * attempt};
    view.masks.clear();
    visible = true;
    for (int i = 0; i < spec.instances; ++i) {
      const auto begin = out.scene.points.begin() + static_cast<std::ptrdiff_t>(i) *
                                                        spec.points_per_instance;
      const std::vector<Point3> slice(begin, begin + spec.points_per_instance);
      const auto refs = project(slice, view.cam);
      auto mask = mask_from_projections(i, refs, spec.image_width, spec.image_height);
      if (mask.empty()) {
        visible = false;
        break;
      }
      view.masks.push_back(std::move(mask));
    }
  }
  if (!visible)
    throw std::runtime_error("generate_scene: no camera pose keeps every instance visible");

  if (spec.feature_channels > 0) {
    view.features = FeatureMap::zeros(spec.image_width, spec.image_height, spec.feature_channels);
    Rng rng(derive_seed(spec.rng_seed, 0xFEA7));
    for (auto& v : view.features.data) v = static_cast<float>(rng.normal());
  }

  out.scene.cameras.push_back(std::move(view));
  return out;
}

MduReport holdout_eval(const SyntheticScene& scene, double holdout_fraction, std::size_t k,
                       double recall_radius, ErrorPairing pairing,
                       std::size_t seeds_per_instance) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw std::invalid_argument("holdout_eval: holdout_fraction must be in (0, 1)");
  if (k < 1) throw std::invalid_argument("holdout_eval: k must be >= 1");

  const Scene& sc = scene.scene;

  struct HeldOut {
    Point3 truth;
    std::vector<Point3> own;  // virtual points generated from its own seed
  };
  std::vector<HeldOut> held;
  std::vector<Point3> all_virtual;
  std::int64_t mask_count = 0;

  for (std::size_t cam_i = 0; cam_i < sc.cameras.size(); ++cam_i) {
    const auto& view = sc.cameras[cam_i];
    mask_count += static_cast<std::int64_t>(view.masks.size());

    const auto refs = project(sc.points, view.cam);
    const auto pairs = filter_by_masks(refs, view.masks);

    // Each reference belongs to the first mask that contains it; the split
    // then happens over these unique references.
    std::vector<std::size_t> owner_pos;  // index into `owners`/`unique_refs`
    std::vector<ReferencePoint> unique_refs;
    std::vector<int> owners;
    std::unordered_set<std::size_t> seen;
    for (const auto& [instance_id, ref] : pairs) {
      if (!seen.insert(ref.source_index).second) continue;
      unique_refs.push_back(ref);
      owners.push_back(instance_id);
    }
    if (unique_refs.size() < 2)
      throw std::invalid_argument("holdout_eval: not enough references to split");

    std::vector<std::size_t> order(unique_refs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(scene.rng_seed, 0xE7A1, cam_i));
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_index(i + 1)]);

    auto held_count = static_cast<std::size_t>(
        std::floor(holdout_fraction * static_cast<double>(order.size())));
    held_count = std::clamp<std::size_t>(held_count, 1, order.size() - 1);

    std::map<int, std::vector<ReferencePoint>> providers;
    for (std::size_t i = held_count; i < order.size(); ++i)
      providers[owners[order[i]]].push_back(unique_refs[order[i]]);
    // Provider order must not depend on the shuffle; restore reference order.
    for (auto& [id, list] : providers)
      std::sort(list.begin(), list.end(),
                [](const ReferencePoint& a, const ReferencePoint& b) {
                  return a.source_index < b.source_index;
                });

    for (std::size_t i = 0; i < held_count; ++i) {
      const auto& ref = unique_refs[order[i]];
      HeldOut h;
      h.truth = sc.points[ref.source_index];
      const auto prov = providers.find(owners[order[i]]);
      if (prov != providers.end()) {
        const Seed seed{ref.u, ref.v, owners[order[i]]};
        for (const auto& hit : knn_depths(seed, prov->second, k)) {
          const Point3 vp = unproject(ref.u, ref.v, hit.depth, view.cam);
          h.own.push_back(vp);
          all_virtual.push_back(vp);
        }
      }
      held.push_back(std::move(h));
    }
  }

  if (held.empty()) throw std::invalid_argument("holdout_eval: empty held-out set");

  double err_sum = 0.0;
  std::size_t err_n = 0;
  std::size_t hit_n = 0;
  for (const auto& h : held) {
    const std::vector<Point3>& pool = pairing == ErrorPairing::OwnSeed ? h.own : all_virtual;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& vp : pool) best = std::min(best, distance(vp, h.truth));
    if (!pool.empty()) {
      err_sum += best;
      ++err_n;
    }
    for (const auto& vp : all_virtual) {
      if (distance(vp, h.truth) <= recall_radius) {
        ++hit_n;
        break;
      }
    }
  }

  MduReport report;
  report.k = k;
  report.mean_error = err_n > 0 ? err_sum / static_cast<double>(err_n) : 0.0;
  report.recall = static_cast<double>(hit_n) / static_cast<double>(held.size());
  report.nvpf = count_nvpf(mask_count, static_cast<std::int64_t>(seeds_per_instance),
                           static_cast<std::int64_t>(k));
  return report;
}

std::vector<BenchRow> bench_retrieval(const std::vector<std::pair<std::size_t, std::size_t>>& sizes,
                                      std::size_t l, double radius, int repeats,
                                      std::uint64_t rng_seed) {
  if (repeats < 1) throw std::invalid_argument("bench_retrieval: repeats must be >= 1");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i].first + sizes[i].second < sizes[i - 1].first + sizes[i - 1].second)
      throw std::invalid_argument("bench_retrieval: sizes must be ascending");
  }

  std::vector<BenchRow> rows;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const auto [m, n] = sizes[s];
    Rng rng(derive_seed(rng_seed, 0xBE7C, s));
    const auto side = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(m + n) * 4.0)));

    std::unordered_set<VoxelKey, VoxelKeyHash> used;
    const auto draw_keys = [&](std::size_t count, SparseVoxelTensor& t, Modality mod) {
      t.channels = 1;
      t.entries.reserve(count);
      used.clear();
      while (used.size() < count) {
        const VoxelKey key{static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side))),
                           static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side))),
                           static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side)))};
        if (!used.insert(key).second) continue;
        VoxelEntry e;
        e.feature = {0.0f};
        e.modality = mod;
        e.count = 1;
        t.entries.emplace(key, std::move(e));
      }
    };

    SparseVoxelTensor camera;
    SparseVoxelTensor lidar;
    draw_keys(m, camera, Modality::Camera);
    draw_keys(n, lidar, Modality::Lidar);

    BenchRow row;
    row.m = m;
    row.n = n;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto assignments = assign_references(camera, lidar, l, radius);
      const auto t1 = std::chrono::steady_clock::now();
      // Consume the result so the call cannot be elided.
      std::size_t assigned = 0;
      for (const auto& a : assignments) assigned += a.lidar_key.has_value() ? 1 : 0;
      if (assigned > camera.size())
        throw std::logic_error("bench_retrieval: impossible assignment count");
      row.times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::vector<double> sorted = row.times_ms;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    row.median_ms = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace voxfuse
