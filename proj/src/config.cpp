#include "voxfuse/config.hpp"

#include <charconv>
#include <cmath>
#include <string_view>

#include "json.hpp"
#include "voxfuse/rng.hpp"
#include "voxfuse/scene_io.hpp"

using nlohmann::json;

namespace voxfuse {

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(where + ": unknown key \"" + key + "\"");
  }
}

SceneSpec::Shape shape_from_string(const std::string& s, const std::string& where) {
  if (s == "ellipsoid") return SceneSpec::Shape::Ellipsoid;
  if (s == "slab") return SceneSpec::Shape::Slab;
  if (s == "plane") return SceneSpec::Shape::Plane;
  throw ConfigError(where + ": unknown shape \"" + s + "\" (ellipsoid, slab, plane)");
}

std::string shape_to_string(SceneSpec::Shape s) {
  switch (s) {
    case SceneSpec::Shape::Ellipsoid: return "ellipsoid";
    case SceneSpec::Shape::Slab: return "slab";
    case SceneSpec::Shape::Plane: return "plane";
  }
  return "ellipsoid";
}

SceneSpec scene_spec_from_json(const json& j, const std::string& where) {
  check_keys(j,
             {"instances", "points_per_instance", "spread", "shape", "rng_seed",
              "feature_channels", "image_width", "image_height", "fx", "fy"},
             where);
  SceneSpec spec;
  spec.instances = j.value("instances", spec.instances);
  spec.points_per_instance = j.value("points_per_instance", spec.points_per_instance);
  spec.spread = j.value("spread", spec.spread);
  if (j.contains("shape")) spec.shape = shape_from_string(j.at("shape").get<std::string>(), where);
  spec.rng_seed = j.value("rng_seed", spec.rng_seed);
  spec.feature_channels = j.value("feature_channels", spec.feature_channels);
  spec.image_width = j.value("image_width", spec.image_width);
  spec.image_height = j.value("image_height", spec.image_height);
  spec.fx = j.value("fx", spec.fx);
  spec.fy = j.value("fy", spec.fy);
  if (spec.instances < 1 || spec.points_per_instance < 1)
    throw ConfigError(where + ": instance and point counts must be >= 1");
  if (spec.spread <= 0.0) throw ConfigError(where + ": spread must be > 0");
  return spec;
}

json scene_spec_to_json(const SceneSpec& spec) {
  json j;
  j["instances"] = spec.instances;
  j["points_per_instance"] = spec.points_per_instance;
  j["spread"] = spec.spread;
  j["shape"] = shape_to_string(spec.shape);
  j["rng_seed"] = spec.rng_seed;
  j["feature_channels"] = spec.feature_channels;
  j["image_width"] = spec.image_width;
  j["image_height"] = spec.image_height;
  j["fx"] = spec.fx;
  j["fy"] = spec.fy;
  return j;
}

std::array<double, 3> triple(const json& j, const std::string& where) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError(where + ": expected 3 values");
  return {v[0], v[1], v[2]};
}

LinearParams random_linear(std::size_t out, std::size_t in, std::uint64_t seed, double bias0) {
  LinearParams p = LinearParams::zeros(out, in);
  Rng rng(seed);
  const double a = 0.4 / std::sqrt(static_cast<double>(in));
  for (auto& w : p.weight) w = rng.uniform(-a, a);
  for (auto& b : p.bias) b = bias0;
  return p;
}

ConvKernel noisy_identity_kernel(int channels, std::uint64_t seed) {
  ConvKernel k = ConvKernel::identity(3, channels);
  Rng rng(seed);
  for (auto& w : k.weights) w += 0.02 * rng.normal();
  return k;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }

  try {
    check_keys(j,
               {"rng_seed", "channels", "mdu", "gma", "grid", "base_voxel_size", "num_scales",
                "scene_dir", "generate", "fixtures_dir", "dump_assignments"},
               path);
    RunConfig cfg;
    cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
    cfg.channels = j.value("channels", cfg.channels);
    if (j.contains("mdu")) {
      const auto& m = j.at("mdu");
      check_keys(m, {"seeds_per_instance", "k"}, path + ": mdu");
      cfg.seeds_per_instance = m.value("seeds_per_instance", cfg.seeds_per_instance);
      cfg.k = m.value("k", cfg.k);
    }
    if (j.contains("gma")) {
      const auto& g = j.at("gma");
      check_keys(g, {"l", "radius_voxels", "scales"}, path + ": gma");
      cfg.gma_l = g.value("l", cfg.gma_l);
      cfg.gma_radius = g.value("radius_voxels", cfg.gma_radius);
      if (g.contains("scales")) {
        for (const auto& s : g.at("scales")) {
          check_keys(s, {"scale", "l", "radius_voxels"}, path + ": gma.scales");
          ScaleOverride ov;
          ov.scale = s.at("scale").get<int>();
          if (s.contains("l")) ov.gma_l = s.at("l").get<std::size_t>();
          if (s.contains("radius_voxels")) ov.gma_radius = s.at("radius_voxels").get<double>();
          cfg.scale_overrides.push_back(ov);
        }
      }
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      check_keys(g, {"min", "max"}, path + ": grid");
      if (g.contains("min")) {
        const auto v = triple(g.at("min"), path + ": grid.min");
        cfg.grid.min = {v[0], v[1], v[2]};
      }
      if (g.contains("max")) {
        const auto v = triple(g.at("max"), path + ": grid.max");
        cfg.grid.max = {v[0], v[1], v[2]};
      }
    }
    if (j.contains("base_voxel_size"))
      cfg.base_voxel_size = triple(j.at("base_voxel_size"), path + ": base_voxel_size");
    cfg.num_scales = j.value("num_scales", cfg.num_scales);
    if (j.contains("scene_dir")) cfg.scene_dir = j.at("scene_dir").get<std::string>();
    if (j.contains("generate"))
      cfg.generate = scene_spec_from_json(j.at("generate"), path + ": generate");
    if (j.contains("fixtures_dir")) cfg.fixtures_dir = j.at("fixtures_dir").get<std::string>();
    cfg.dump_assignments = j.value("dump_assignments", cfg.dump_assignments);

    if (cfg.channels < 1) throw ConfigError(path + ": channels must be >= 1");
    if (cfg.k < 1) throw ConfigError(path + ": mdu.k must be >= 1");
    if (cfg.seeds_per_instance < 1)
      throw ConfigError(path + ": mdu.seeds_per_instance must be >= 1");
    if (cfg.gma_l < 1) throw ConfigError(path + ": gma.l must be >= 1");
    if (cfg.gma_radius <= 0.0) throw ConfigError(path + ": gma.radius_voxels must be > 0");
    if (cfg.num_scales < 1 || cfg.num_scales > 8)
      throw ConfigError(path + ": num_scales must be in [1, 8]");
    for (double s : cfg.base_voxel_size)
      if (s <= 0.0) throw ConfigError(path + ": base_voxel_size must be positive");
    if (!(cfg.grid.min.x < cfg.grid.max.x && cfg.grid.min.y < cfg.grid.max.y &&
          cfg.grid.min.z < cfg.grid.max.z))
      throw ConfigError(path + ": grid min must be strictly below max");
    if (cfg.scene_dir && cfg.generate)
      throw ConfigError(path + ": scene_dir and generate are mutually exclusive");
    return cfg;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  json j;
  j["rng_seed"] = cfg.rng_seed;
  j["channels"] = cfg.channels;
  j["mdu"] = {{"seeds_per_instance", cfg.seeds_per_instance}, {"k", cfg.k}};
  json gma = {{"l", cfg.gma_l}, {"radius_voxels", cfg.gma_radius}};
  if (!cfg.scale_overrides.empty()) {
    json scales = json::array();
    for (const auto& ov : cfg.scale_overrides) {
      json s = {{"scale", ov.scale}};
      if (ov.gma_l) s["l"] = *ov.gma_l;
      if (ov.gma_radius) s["radius_voxels"] = *ov.gma_radius;
      scales.push_back(s);
    }
    gma["scales"] = scales;
  }
  j["gma"] = gma;
  j["grid"] = {{"min", {cfg.grid.min.x, cfg.grid.min.y, cfg.grid.min.z}},
               {"max", {cfg.grid.max.x, cfg.grid.max.y, cfg.grid.max.z}}};
  j["base_voxel_size"] = cfg.base_voxel_size;
  j["num_scales"] = cfg.num_scales;
  if (cfg.scene_dir) j["scene_dir"] = *cfg.scene_dir;
  if (cfg.generate) j["generate"] = scene_spec_to_json(*cfg.generate);
  if (cfg.fixtures_dir) j["fixtures_dir"] = *cfg.fixtures_dir;
  if (cfg.dump_assignments) j["dump_assignments"] = true;
  write_text_file(path, j.dump(2) + "\n");
}

SceneSpec parse_generate_spec(const std::string& text) {
  const std::string where = "generate spec \"" + text + "\"";
  std::string_view rest(text);
  if (!rest.starts_with("gen:")) throw ConfigError(where + ": must start with gen:");
  rest.remove_prefix(4);

  SceneSpec spec;
  while (!rest.empty()) {
    const std::size_t comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (item.empty()) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + ": expected key=value, got \"" + std::string(item) + "\"");
    const std::string key(item.substr(0, eq));
    const std::string value(item.substr(eq + 1));

    const auto as_int = [&](int& dst) {
      const auto res = std::from_chars(value.data(), value.data() + value.size(), dst);
      if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw ConfigError(where + ": bad integer for " + key);
    };
    const auto as_u64 = [&](std::uint64_t& dst) {
      const auto res = std::from_chars(value.data(), value.data() + value.size(), dst);
      if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw ConfigError(where + ": bad integer for " + key);
    };
    const auto as_double = [&](double& dst) {
      const auto res = std::from_chars(value.data(), value.data() + value.size(), dst);
      if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw ConfigError(where + ": bad number for " + key);
    };

    if (key == "instances") as_int(spec.instances);
    else if (key == "points") as_int(spec.points_per_instance);
    else if (key == "spread") as_double(spec.spread);
    else if (key == "shape") spec.shape = shape_from_string(value, where);
    else if (key == "seed") as_u64(spec.rng_seed);
    else if (key == "channels") as_int(spec.feature_channels);
    else if (key == "width") as_int(spec.image_width);
    else if (key == "height") as_int(spec.image_height);
    else if (key == "fx") as_double(spec.fx);
    else if (key == "fy") as_double(spec.fy);
    else throw ConfigError(where + ": unknown key \"" + key + "\"");
  }
  if (spec.instances < 1 || spec.points_per_instance < 1)
    throw ConfigError(where + ": instance and point counts must be >= 1");
  if (spec.spread <= 0.0) throw ConfigError(where + ": spread must be > 0");
  return spec;
}

void Fixtures::validate(int channels, int num_scales) const {
  const auto c = static_cast<std::size_t>(channels);
  const auto n = static_cast<std::size_t>(num_scales);
  const auto check_linear = [&](const LinearParams& p, std::size_t out, std::size_t in,
                                const char* name) {
    if (p.out != out || p.in != in)
      throw ConfigError(std::string("fixtures: ") + name + " must be " + std::to_string(out) +
                        " x " + std::to_string(in));
    if (p.weight.size() != out * in || p.bias.size() != out)
      throw ConfigError(std::string("fixtures: ") + name + " weight/bias sizes are inconsistent");
  };
  check_linear(point_encoder, c, 3, "point_encoder");
  check_linear(depth_aware, c, c + 1, "depth_aware");
  check_linear(seed_gate, 1, c + 1, "seed_gate");
  check_linear(voxel_gate, c, c, "voxel_gate");
  check_linear(lc_proj, c, 2 * c, "lc_proj");

  const auto check_kernels = [&](const std::vector<ConvKernel>& ks, const char* name) {
    if (ks.size() != n)
      throw ConfigError(std::string("fixtures: expected ") + std::to_string(num_scales) + " " +
                        name + " kernels, got " + std::to_string(ks.size()));
    for (const auto& k : ks) {
      k.validate();
      if (k.in_channels != channels || k.out_channels != channels)
        throw ConfigError(std::string("fixtures: ") + name +
                          " kernel channels disagree with config");
    }
  };
  check_kernels(lidar_kernels, "lidar");
  check_kernels(joint_lidar_kernels, "joint_lidar");
  check_kernels(joint_camera_kernels, "joint_camera");
  check_kernels(joint_both_kernels, "joint_both");
  check_kernels(fuse_kernels, "fuse");
}

Fixtures default_fixtures(std::uint64_t seed, int channels, int num_scales) {
  const auto c = static_cast<std::size_t>(channels);
  Fixtures fx;
  fx.point_encoder = random_linear(c, 3, derive_seed(seed, 1), 0.0);
  fx.depth_aware = random_linear(c, c + 1, derive_seed(seed, 2), 0.0);
  fx.seed_gate = random_linear(1, c + 1, derive_seed(seed, 3), 0.0);
  fx.voxel_gate = random_linear(c, c, derive_seed(seed, 4), 0.3);
  fx.lc_proj = random_linear(c, 2 * c, derive_seed(seed, 5), 0.0);
  for (std::size_t r = 0; r < c; ++r) {
    fx.lc_proj.weight[r * 2 * c + r] += 0.5;
    fx.lc_proj.weight[r * 2 * c + c + r] += 0.5;
  }
  for (int i = 0; i < num_scales; ++i) {
    const auto s = static_cast<std::uint64_t>(i);
    fx.lidar_kernels.push_back(noisy_identity_kernel(channels, derive_seed(seed, 10, s)));
    fx.joint_lidar_kernels.push_back(noisy_identity_kernel(channels, derive_seed(seed, 20, s)));
    fx.joint_camera_kernels.push_back(noisy_identity_kernel(channels, derive_seed(seed, 30, s)));
    fx.joint_both_kernels.push_back(noisy_identity_kernel(channels, derive_seed(seed, 40, s)));
    fx.fuse_kernels.push_back(noisy_identity_kernel(channels, derive_seed(seed, 50, s)));
  }
  return fx;
}

void write_fixtures(const Fixtures& fx, const std::string& dir) {
  ensure_dir(dir);
  write_params_json(fx.point_encoder, dir + "/params_point_encoder.json");
  write_params_json(fx.depth_aware, dir + "/params_depth_aware.json");
  write_params_json(fx.seed_gate, dir + "/params_seed_gate.json");
  write_params_json(fx.voxel_gate, dir + "/params_voxel_gate.json");
  write_params_json(fx.lc_proj, dir + "/params_lc_proj.json");
  for (std::size_t i = 0; i < fx.lidar_kernels.size(); ++i) {
    const std::string suffix = "_s" + std::to_string(i) + ".json";
    write_kernel_json(fx.lidar_kernels[i], dir + "/kernel_lidar" + suffix);
    write_kernel_json(fx.joint_lidar_kernels[i], dir + "/kernel_joint_lidar" + suffix);
    write_kernel_json(fx.joint_camera_kernels[i], dir + "/kernel_joint_camera" + suffix);
    write_kernel_json(fx.joint_both_kernels[i], dir + "/kernel_joint_both" + suffix);
    write_kernel_json(fx.fuse_kernels[i], dir + "/kernel_fuse" + suffix);
  }
}

Fixtures load_fixtures(const std::string& dir, int channels, int num_scales) {
  Fixtures fx;
  fx.point_encoder = load_params_json(dir + "/params_point_encoder.json");
  fx.depth_aware = load_params_json(dir + "/params_depth_aware.json");
  fx.seed_gate = load_params_json(dir + "/params_seed_gate.json");
  fx.voxel_gate = load_params_json(dir + "/params_voxel_gate.json");
  fx.lc_proj = load_params_json(dir + "/params_lc_proj.json");
  for (int i = 0; i < num_scales; ++i) {
    const std::string suffix = "_s" + std::to_string(i) + ".json";
    fx.lidar_kernels.push_back(load_kernel_json(dir + "/kernel_lidar" + suffix));
    fx.joint_lidar_kernels.push_back(load_kernel_json(dir + "/kernel_joint_lidar" + suffix));
    fx.joint_camera_kernels.push_back(load_kernel_json(dir + "/kernel_joint_camera" + suffix));
    fx.joint_both_kernels.push_back(load_kernel_json(dir + "/kernel_joint_both" + suffix));
    fx.fuse_kernels.push_back(load_kernel_json(dir + "/kernel_fuse" + suffix));
  }
  fx.validate(channels, num_scales);
  return fx;
}

}  // namespace voxfuse
