#include "voxfuse/mdu.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "voxfuse/rng.hpp"

namespace voxfuse {

FeatureMap FeatureMap::zeros(int width, int height, int channels) {
  FeatureMap m;
  m.width = width;
  m.height = height;
  m.channels = channels;
  m.data.assign(static_cast<std::size_t>(width) * height * channels, 0.0f);
  return m;
}

std::span<const float> FeatureMap::at(int u, int v) const {
  const std::size_t off = (static_cast<std::size_t>(v) * width + u) * channels;
  return {data.data() + off, static_cast<std::size_t>(channels)};
}

std::span<float> FeatureMap::at(int u, int v) {
  const std::size_t off = (static_cast<std::size_t>(v) * width + u) * channels;
  return {data.data() + off, static_cast<std::size_t>(channels)};
}

LinearParams LinearParams::zeros(std::size_t out, std::size_t in) {
  LinearParams p;
  p.out = out;
  p.in = in;
  p.weight.assign(out * in, 0.0);
  p.bias.assign(out, 0.0);
  return p;
}

double LinearParams::row_dot(std::size_t r, std::span<const float> a,
                             std::span<const double> extra) const {
  const double* w = weight.data() + r * in;
  double acc = bias[r];
  for (std::size_t i = 0; i < a.size(); ++i) acc += w[i] * static_cast<double>(a[i]);
  for (std::size_t i = 0; i < extra.size(); ++i) acc += w[a.size() + i] * extra[i];
  return acc;
}

std::vector<Seed> sample_seeds(const InstanceMask& mask, std::size_t n, std::uint64_t rng_seed) {
  if (mask.empty()) throw std::invalid_argument("sample_seeds: empty mask");
  if (n < 1) throw std::invalid_argument("sample_seeds: n must be >= 1");
  const auto& cells = mask.cells();
  Rng rng(rng_seed);
  std::vector<Seed> seeds;
  seeds.reserve(n);
  if (cells.size() >= n) {
    // partial Fisher-Yates over cell indices
    std::vector<std::size_t> idx(cells.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + rng.uniform_index(idx.size() - i);
      std::swap(idx[i], idx[j]);
      const PixelCell& c = cells[idx[i]];
      seeds.push_back({static_cast<double>(c.u), static_cast<double>(c.v), mask.instance_id()});
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const PixelCell& c = cells[rng.uniform_index(cells.size())];
      seeds.push_back({static_cast<double>(c.u), static_cast<double>(c.v), mask.instance_id()});
    }
  }
  return seeds;
}

std::vector<DepthHit> knn_depths(const Seed& seed, const std::vector<ReferencePoint>& refs,
                                 std::size_t k) {
  if (refs.empty()) throw std::invalid_argument("knn_depths: empty reference set");
  if (k < 1) throw std::invalid_argument("knn_depths: k must be >= 1");
  struct Cand {
    double dist2;
    std::size_t index;
  };
  std::vector<Cand> cands;
  cands.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const double du = refs[i].u - seed.u;
    const double dv = refs[i].v - seed.v;
    cands.push_back({du * du + dv * dv, i});
  }
  const std::size_t take = std::min(k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + take, cands.end(),
                    [](const Cand& a, const Cand& b) {
                      if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
                      return a.index < b.index;
                    });
  std::vector<DepthHit> hits;
  hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) hits.push_back({refs[cands[i].index].d, cands[i].index});
  return hits;
}

namespace {

// cell -> nearest-to-camera reference depth
std::unordered_map<std::int64_t, double> rasterize_depths(const std::vector<ReferencePoint>& refs,
                                                          int width, int height) {
  std::unordered_map<std::int64_t, double> depth_at;
  depth_at.reserve(refs.size() * 2);
  for (const ReferencePoint& r : refs) {
    const int u = static_cast<int>(std::floor(r.u));
    const int v = static_cast<int>(std::floor(r.v));
    if (u < 0 || u >= width || v < 0 || v >= height) continue;
    const std::int64_t cell = static_cast<std::int64_t>(v) * width + u;
    auto [it, inserted] = depth_at.try_emplace(cell, r.d);
    if (!inserted && r.d < it->second) it->second = r.d;
  }
  return depth_at;
}

}  // namespace

DepthAwareFeatureMap build_depth_aware_features(const FeatureMap& cmap,
                                                const std::vector<ReferencePoint>& refs,
                                                const LinearParams& params) {
  const std::size_t c = static_cast<std::size_t>(cmap.channels);
  if (params.out != c || params.in != c + 1)
    throw std::invalid_argument("build_depth_aware_features: weight must be channels x (channels+1)");
  const auto depth_at = rasterize_depths(refs, cmap.width, cmap.height);
  DepthAwareFeatureMap out = FeatureMap::zeros(cmap.width, cmap.height, cmap.channels);
  for (int v = 0; v < cmap.height; ++v) {
    for (int u = 0; u < cmap.width; ++u) {
      const std::int64_t cell = static_cast<std::int64_t>(v) * cmap.width + u;
      const auto it = depth_at.find(cell);
      const double depth[1] = {it == depth_at.end() ? 0.0 : it->second};
      const auto src = cmap.at(u, v);
      auto dst = out.at(u, v);
      for (std::size_t r = 0; r < c; ++r)
        dst[r] = static_cast<float>(params.row_dot(r, src, depth));
    }
  }
  return out;
}

std::vector<VirtualPoint> modulate_and_unproject(const std::vector<Seed>& seeds,
                                                 const std::vector<std::vector<DepthHit>>& depths_per_seed,
                                                 const DepthAwareFeatureMap& cdmap,
                                                 const LinearParams& gate_params,
                                                 const Camera& cam) {
  const std::size_t c = static_cast<std::size_t>(cdmap.channels);
  if (gate_params.out != 1 || gate_params.in != c + 1)
    throw std::invalid_argument("modulate_and_unproject: gate must be 1 x (channels+1)");
  if (seeds.size() != depths_per_seed.size())
    throw std::invalid_argument("modulate_and_unproject: seeds/depths size mismatch");
  std::vector<VirtualPoint> points;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const Seed& s = seeds[i];
    const int u = static_cast<int>(std::floor(s.u));
    const int v = static_cast<int>(std::floor(s.v));
    const auto pixel = cdmap.at(u, v);
    const auto& hits = depths_per_seed[i];
    for (std::size_t k = 0; k < hits.size(); ++k) {
      const double d = hits[k].depth;
      const double depth[1] = {d};
      const double scale = 1.0 / (1.0 + std::exp(-gate_params.row_dot(0, pixel, depth)));
      VirtualPoint vp;
      vp.position = unproject(s.u, s.v, d, cam);
      vp.feature.resize(c);
      for (std::size_t ch = 0; ch < c; ++ch)
        vp.feature[ch] = static_cast<float>(static_cast<double>(pixel[ch]) * scale);
      vp.seed_index = i;
      vp.depth_rank = static_cast<int>(k);
      points.push_back(std::move(vp));
    }
  }
  return points;
}

std::int64_t count_nvpf(std::int64_t instances, std::int64_t seeds_per_instance, std::int64_t k) {
  return instances * seeds_per_instance * k;
}

}  // namespace voxfuse
