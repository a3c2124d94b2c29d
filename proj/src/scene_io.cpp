#include "voxfuse/scene_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string_view>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace voxfuse {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

bool parse_point_row(std::string_view line, Point3& p) {
  double vals[3];
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t next = i < 2 ? line.find(',', pos) : line.size();
    if (next == std::string_view::npos) return false;
    std::string_view tok = line.substr(pos, next - pos);
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
      tok.remove_suffix(1);
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), vals[i]);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) return false;
    pos = next + 1;
  }
  p = {vals[0], vals[1], vals[2]};
  return true;
}

std::vector<Point3> load_points_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<Point3> pts;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line == "\r") continue;
    Point3 p;
    if (!parse_point_row(line, p)) {
      if (line_no == 1) continue;  // tolerate a header row
      throw ConfigError(path + ": malformed row at line " + std::to_string(line_no));
    }
    pts.push_back(p);
  }
  return pts;
}

Camera load_camera_json(const std::string& path) {
  const json j = parse_json_file(path);
  Camera cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    const auto rot = j.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9) throw ConfigError(path + ": rotation must have 9 entries");
    std::copy(rot.begin(), rot.end(), cam.rotation.m.begin());
    const auto t = j.at("translation").get<std::vector<double>>();
    if (t.size() != 3) throw ConfigError(path + ": translation must have 3 entries");
    cam.translation = {t[0], t[1], t[2]};
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cam;
}

void write_camera_json(const Camera& cam, const std::string& path) {
  json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["rotation"] = cam.rotation.m;
  j["translation"] = {cam.translation.x, cam.translation.y, cam.translation.z};
  j["width"] = cam.width;
  j["height"] = cam.height;
  write_text_file(path, j.dump(2) + "\n");
}

std::vector<InstanceMask> load_masks_json(const std::string& path, const Camera& cam) {
  const json j = parse_json_file(path);
  std::vector<InstanceMask> masks;
  try {
    for (const auto& m : j) {
      const int id = m.at("instance_id").get<int>();
      std::vector<std::array<int, 4>> rects;
      for (const auto& r : m.at("rects")) {
        if (r.size() != 4) throw ConfigError(path + ": rects entries must have 4 values");
        rects.push_back({r[0].get<int>(), r[1].get<int>(), r[2].get<int>(), r[3].get<int>()});
      }
      masks.push_back(InstanceMask::from_rects(id, rects, cam.width, cam.height));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return masks;
}

void write_masks_json(const std::vector<InstanceMask>& masks, const std::string& path) {
  json j = json::array();
  for (const auto& mask : masks) {
    json rects = json::array();
    for (const auto& r : mask.to_rects()) rects.push_back({r[0], r[1], r[2], r[3]});
    j.push_back({{"instance_id", mask.instance_id()}, {"rects", rects}});
  }
  write_text_file(path, j.dump(2) + "\n");
}

// Flat binary grids share one layout: three little-endian int32 dims, then
// float32 payload. The host is assumed little-endian.
void write_grid_bin(int d0, int d1, int d2, const std::vector<float>& data,
                    const std::string& path) {
  std::string bytes;
  bytes.resize(12 + data.size() * 4);
  const std::int32_t hdr[3] = {d0, d1, d2};
  std::memcpy(bytes.data(), hdr, 12);
  std::memcpy(bytes.data() + 12, data.data(), data.size() * 4);
  write_text_file(path, bytes);
}

void load_grid_bin(const std::string& path, int& d0, int& d1, int& d2,
                   std::vector<float>& data) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < 12) throw ConfigError(path + ": truncated header");
  std::int32_t hdr[3];
  std::memcpy(hdr, bytes.data(), 12);
  d0 = hdr[0];
  d1 = hdr[1];
  d2 = hdr[2];
  if (d0 < 0 || d1 < 0 || d2 < 0) throw ConfigError(path + ": negative dimension");
  const std::size_t count = static_cast<std::size_t>(d0) * static_cast<std::size_t>(d1) *
                            static_cast<std::size_t>(d2);
  if (bytes.size() != 12 + count * 4)
    throw ConfigError(path + ": payload size does not match header");
  data.resize(count);
  std::memcpy(data.data(), bytes.data() + 12, count * 4);
}

}  // namespace

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError(dir + ": cannot create directory: " + ec.message());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path + ": cannot open for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw ConfigError(path + ": write failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw ConfigError(path + ": read failed");
  return std::move(ss).str();
}

Scene load_scene(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError(dir + ": not a scene directory");
  Scene scene;
  scene.points = load_points_csv(dir + "/points.csv");

  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("camera_") && name.ends_with(".json"))
      ids.push_back(name.substr(7, name.size() - 7 - 5));
  }
  std::sort(ids.begin(), ids.end());

  for (const auto& id : ids) {
    CameraView view;
    view.id = id;
    view.cam = load_camera_json(dir + "/camera_" + id + ".json");
    const std::string masks_path = dir + "/masks_" + id + ".json";
    if (fs::exists(masks_path)) view.masks = load_masks_json(masks_path, view.cam);
    const std::string features_path = dir + "/features_" + id + ".bin";
    if (fs::exists(features_path)) view.features = load_feature_bin(features_path);
    scene.cameras.push_back(std::move(view));
  }
  return scene;
}

void write_scene(const Scene& scene, const std::string& dir) {
  ensure_dir(dir);
  std::string csv;
  for (const auto& p : scene.points)
    csv += fmt(p.x) + "," + fmt(p.y) + "," + fmt(p.z) + "\n";
  write_text_file(dir + "/points.csv", csv);
  for (const auto& view : scene.cameras) {
    write_camera_json(view.cam, dir + "/camera_" + view.id + ".json");
    write_masks_json(view.masks, dir + "/masks_" + view.id + ".json");
    if (view.has_features()) write_feature_bin(view.features, dir + "/features_" + view.id + ".bin");
  }
}

FeatureMap load_feature_bin(const std::string& path) {
  FeatureMap fm;
  load_grid_bin(path, fm.width, fm.height, fm.channels, fm.data);
  if (fm.width < 1 || fm.height < 1 || fm.channels < 1)
    throw ConfigError(path + ": feature map dimensions must be positive");
  return fm;
}

void write_feature_bin(const FeatureMap& fm, const std::string& path) {
  write_grid_bin(fm.width, fm.height, fm.channels, fm.data, path);
}

void write_bev_bin(const BevMap& bev, const std::string& path) {
  write_grid_bin(bev.width, bev.height, bev.channels, bev.data, path);
}

BevMap load_bev_bin(const std::string& path) {
  BevMap bev;
  load_grid_bin(path, bev.width, bev.height, bev.channels, bev.data);
  return bev;
}

LinearParams load_params_json(const std::string& path) {
  const json j = parse_json_file(path);
  LinearParams p;
  try {
    p.out = j.at("out").get<std::size_t>();
    p.in = j.at("in").get<std::size_t>();
    p.weight = j.at("weight").get<std::vector<double>>();
    p.bias = j.at("bias").get<std::vector<double>>();
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (p.weight.size() != p.out * p.in || p.bias.size() != p.out)
    throw ConfigError(path + ": weight/bias sizes disagree with out x in");
  return p;
}

void write_params_json(const LinearParams& p, const std::string& path) {
  json j;
  j["out"] = p.out;
  j["in"] = p.in;
  j["weight"] = p.weight;
  j["bias"] = p.bias;
  write_text_file(path, j.dump(2) + "\n");
}

ConvKernel load_kernel_json(const std::string& path) {
  const json j = parse_json_file(path);
  ConvKernel k;
  try {
    k.extent = j.at("extent").get<int>();
    k.in_channels = j.at("in_channels").get<int>();
    k.out_channels = j.at("out_channels").get<int>();
    k.bias = j.at("bias").get<std::vector<double>>();
    const auto& blocks = j.at("weights");
    k.weights.reserve(blocks.size() * static_cast<std::size_t>(k.out_channels) *
                      static_cast<std::size_t>(k.in_channels));
    for (const auto& block : blocks) {
      const auto flat = block.get<std::vector<double>>();
      if (flat.size() != static_cast<std::size_t>(k.out_channels) *
                             static_cast<std::size_t>(k.in_channels))
        throw ConfigError(path + ": weight block size is not out_channels x in_channels");
      k.weights.insert(k.weights.end(), flat.begin(), flat.end());
    }
    k.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return k;
}

void write_kernel_json(const ConvKernel& k, const std::string& path) {
  json blocks = json::array();
  const std::size_t block_size = static_cast<std::size_t>(k.out_channels) *
                                 static_cast<std::size_t>(k.in_channels);
  for (std::size_t off = 0; off < k.offset_count(); ++off) {
    const auto begin = k.weights.begin() + static_cast<std::ptrdiff_t>(off * block_size);
    blocks.push_back(std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(block_size)));
  }
  json j;
  j["extent"] = k.extent;
  j["in_channels"] = k.in_channels;
  j["out_channels"] = k.out_channels;
  j["weights"] = blocks;
  j["bias"] = k.bias;
  write_text_file(path, j.dump(2) + "\n");
}

std::string metrics_to_json(const PipelineResult& result) {
  json j;
  j["nvpf"] = result.metrics.nvpf;
  j["dropped_lidar_points"] = result.metrics.dropped_lidar_points;
  json scales = json::array();
  for (const auto& s : result.metrics.scales) {
    scales.push_back({{"scale_id", s.scale_id},
                      {"virtual_points", s.virtual_points},
                      {"lidar_voxels", s.lidar_voxels},
                      {"camera_voxels", s.camera_voxels},
                      {"merged_voxels", s.merged_voxels},
                      {"fused_voxels", s.fused_voxels},
                      {"dropped_virtual_points", s.dropped_virtual_points}});
  }
  j["scales"] = scales;
  const auto bev_meta = [](const BevMap& bev) {
    return json{{"width", bev.width},
                {"height", bev.height},
                {"channels", bev.channels},
                {"min_ix", bev.min_ix},
                {"min_iy", bev.min_iy}};
  };
  j["bev"] = {{"lidar", bev_meta(result.bev_lidar)},
              {"multimodal", bev_meta(result.bev_multimodal)}};
  return j.dump(2) + "\n";
}

std::string mdu_reports_csv(const std::vector<MduReport>& reports) {
  std::string csv = "k,mean_error,recall,nvpf\n";
  for (const auto& r : reports) {
    csv += std::to_string(r.k) + "," + fmt(r.mean_error) + "," + fmt(r.recall) + "," +
           std::to_string(r.nvpf) + "\n";
  }
  return csv;
}

std::string bench_rows_csv(const std::vector<BenchRow>& rows) {
  std::string csv = "m,n,repeats,median_ms,min_ms,max_ms\n";
  for (const auto& r : rows) {
    double lo = r.median_ms;
    double hi = r.median_ms;
    if (!r.times_ms.empty()) {
      const auto [mn, mx] = std::minmax_element(r.times_ms.begin(), r.times_ms.end());
      lo = *mn;
      hi = *mx;
    }
    csv += std::to_string(r.m) + "," + std::to_string(r.n) + "," +
           std::to_string(r.times_ms.size()) + "," + fmt(r.median_ms) + "," + fmt(lo) + "," +
           fmt(hi) + "\n";
  }
  return csv;
}

}  // namespace voxfuse
