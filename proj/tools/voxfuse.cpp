#include <charconv>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "voxfuse/config.hpp"
#include "voxfuse/fusion.hpp"
#include "voxfuse/harness.hpp"
#include "voxfuse/scene_io.hpp"

namespace {

using namespace voxfuse;

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string tok = text.substr(pos, comma - pos);
    pos = comma + 1;
    if (tok.empty()) continue;
    std::size_t k = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), k);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || k < 1)
      throw ConfigError("--k: bad value \"" + tok + "\"");
    ks.push_back(k);
  }
  if (ks.empty()) throw ConfigError("--k: at least one value required");
  return ks;
}

std::vector<std::pair<std::size_t, std::size_t>> parse_sizes(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const std::string tok = text.substr(pos, comma - pos);
    pos = comma + 1;
    if (tok.empty()) continue;
    const std::size_t x = tok.find('x');
    if (x == std::string::npos)
      throw ConfigError("--sizes: expected MxN, got \"" + tok + "\"");
    std::size_t m = 0;
    std::size_t n = 0;
    const auto rm = std::from_chars(tok.data(), tok.data() + x, m);
    const auto rn = std::from_chars(tok.data() + x + 1, tok.data() + tok.size(), n);
    if (rm.ec != std::errc{} || rm.ptr != tok.data() + x || rn.ec != std::errc{} ||
        rn.ptr != tok.data() + tok.size())
      throw ConfigError("--sizes: expected MxN, got \"" + tok + "\"");
    sizes.emplace_back(m, n);
  }
  if (sizes.empty()) throw ConfigError("--sizes: at least one MxN pair required");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i].first + sizes[i].second < sizes[i - 1].first + sizes[i - 1].second)
      throw ConfigError("--sizes: pairs must be ascending in M+N");
  }
  return sizes;
}

/// Applies a --scene argument: either a directory or a gen: recipe.
void apply_scene_arg(RunConfig& cfg, const std::string& scene_arg) {
  if (scene_arg.starts_with("gen:")) {
    cfg.generate = parse_generate_spec(scene_arg);
    cfg.scene_dir.reset();
  } else {
    cfg.scene_dir = scene_arg;
    cfg.generate.reset();
  }
}

SyntheticScene resolve_scene(const RunConfig& cfg) {
  if (cfg.scene_dir) {
    SyntheticScene s;
    s.scene = load_scene(*cfg.scene_dir);
    s.rng_seed = cfg.rng_seed;
    return s;
  }
  if (cfg.generate) return generate_scene(*cfg.generate);
  throw ConfigError("no scene given: set --scene, or scene_dir/generate in the config");
}

struct CommonArgs {
  std::string config_path;
  std::string scene;
  std::string out;
  std::optional<std::uint64_t> seed;
};

RunConfig make_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = load_run_config(args.config_path);
  if (args.seed) cfg.rng_seed = *args.seed;
  if (!args.scene.empty()) apply_scene_arg(cfg, args.scene);
  return cfg;
}

int cmd_run(const CommonArgs& args, std::optional<std::size_t> k_override,
            std::optional<std::size_t> seeds_override, const std::string& fixtures_arg,
            bool dump_assignments) {
  RunConfig cfg = make_config(args);
  if (k_override) cfg.k = *k_override;
  if (seeds_override) cfg.seeds_per_instance = *seeds_override;
  if (!fixtures_arg.empty()) cfg.fixtures_dir = fixtures_arg;
  if (dump_assignments) cfg.dump_assignments = true;

  if (cfg.generate && cfg.generate->feature_channels == 0)
    cfg.generate->feature_channels = cfg.channels;
  // A generated scene follows the run seed unless the recipe pinned its own.
  if (cfg.generate && args.seed) cfg.generate->rng_seed = *args.seed;

  const SyntheticScene scene = resolve_scene(cfg);
  const Fixtures fx = cfg.fixtures_dir
                          ? load_fixtures(*cfg.fixtures_dir, cfg.channels, cfg.num_scales)
                          : default_fixtures(cfg.rng_seed, cfg.channels, cfg.num_scales);

  const PipelineResult result = run_pipeline(cfg, scene.scene, fx);
  write_pipeline_outputs(result, args.out);

  for (const auto& [stage, ms] : result.stage_ms)
    std::cerr << "[voxfuse] " << stage << ": " << ms << " ms\n";
  std::cerr << "[voxfuse] wrote " << args.out << " (nvpf " << result.metrics.nvpf << ")\n";
  return 0;
}

int cmd_eval_mdu(const CommonArgs& args, const std::string& k_list, double holdout,
                 double radius, const std::string& pairing_name,
                 std::optional<std::size_t> seeds_override) {
  RunConfig cfg = make_config(args);
  if (seeds_override) cfg.seeds_per_instance = *seeds_override;
  const auto ks = parse_k_list(k_list);

  ErrorPairing pairing = ErrorPairing::OwnSeed;
  if (pairing_name == "global") pairing = ErrorPairing::GlobalNearest;
  else if (pairing_name != "own")
    throw ConfigError("--pairing: expected own or global");

  if (cfg.generate && args.seed) cfg.generate->rng_seed = *args.seed;
  const SyntheticScene scene = resolve_scene(cfg);

  std::vector<MduReport> reports;
  for (const std::size_t k : ks)
    reports.push_back(holdout_eval(scene, holdout, k, radius, pairing, cfg.seeds_per_instance));

  write_text_file(args.out, mdu_reports_csv(reports));
  std::cerr << "[voxfuse] wrote " << args.out << " (" << reports.size() << " rows)\n";
  return 0;
}

int cmd_bench_gma(const CommonArgs& args, const std::string& sizes_text, std::size_t l,
                  double radius, int repeats) {
  const auto sizes = parse_sizes(sizes_text);
  if (repeats < 1) throw ConfigError("--repeats must be >= 1");
  if (l < 1) throw ConfigError("--l must be >= 1");
  const std::uint64_t seed = args.seed.value_or(7);

  const auto rows = bench_retrieval(sizes, l, radius, repeats, seed);
  write_text_file(args.out, bench_rows_csv(rows));
  std::cerr << "[voxfuse] wrote " << args.out << " (" << rows.size() << " rows)\n";
  return 0;
}

int cmd_gen_scene(const CommonArgs& args, const SceneSpec& spec) {
  const SyntheticScene scene = generate_scene(spec);
  write_scene(scene.scene, args.out);
  std::cerr << "[voxfuse] wrote scene with " << scene.scene.points.size() << " points to "
            << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic multi-scale LiDAR-camera voxel fusion"};
  app.require_subcommand(1);

  CommonArgs run_args, eval_args, bench_args, gen_args;

  auto* run = app.add_subcommand("run", "execute the fusion pipeline and write artifacts");
  std::optional<std::size_t> run_k, run_seeds;
  std::string run_fixtures;
  bool run_dump_assignments = false;
  run->add_option("--config", run_args.config_path, "config JSON path");
  run->add_option("--scene", run_args.scene, "scene directory or gen: recipe");
  run->add_option("--out", run_args.out, "output directory")->default_val("out");
  run->add_option("--seed", run_args.seed, "override rng_seed");
  run->add_option("--k", run_k, "depths per seed");
  run->add_option("--seeds-per-instance", run_seeds, "seeds per instance mask");
  run->add_option("--fixtures", run_fixtures, "fixtures directory");
  run->add_flag("--dump-assignments", run_dump_assignments,
                "write per-scale reference assignment CSVs");

  auto* eval = app.add_subcommand("eval-mdu", "hold-out depth retrieval evaluation");
  std::string eval_k = "1,3,6,10";
  double eval_holdout = 0.5;
  double eval_radius = 0.23;
  std::string eval_pairing = "own";
  std::optional<std::size_t> eval_seeds;
  eval->add_option("--config", eval_args.config_path, "config JSON path");
  eval->add_option("--scene", eval_args.scene, "scene directory or gen: recipe");
  eval->add_option("--out", eval_args.out, "report CSV path")->default_val("report.csv");
  eval->add_option("--seed", eval_args.seed, "override rng_seed");
  eval->add_option("--k", eval_k, "comma-separated K values");
  eval->add_option("--holdout", eval_holdout, "held-out reference fraction");
  eval->add_option("--radius", eval_radius, "recall radius in meters");
  eval->add_option("--pairing", eval_pairing, "error pairing: own or global");
  eval->add_option("--seeds-per-instance", eval_seeds, "seeds per instance for the nvpf column");

  auto* bench = app.add_subcommand("bench-gma", "time the reference assignment path");
  std::string bench_sizes;
  std::size_t bench_l = 2048;
  double bench_radius = 4.0;
  int bench_repeats = 5;
  bench->add_option("--sizes", bench_sizes, "comma-separated MxN voxel counts")->required();
  bench->add_option("--out", bench_args.out, "bench CSV path")->default_val("bench.csv");
  bench->add_option("--seed", bench_args.seed, "rng seed for the key sets");
  bench->add_option("--l", bench_l, "FPS sample count");
  bench->add_option("--radius", bench_radius, "ball radius in voxels");
  bench->add_option("--repeats", bench_repeats, "timing repeats per size");

  auto* gen = app.add_subcommand("gen-scene", "write a synthetic scene directory");
  SceneSpec gen_spec;
  std::string gen_shape = "ellipsoid";
  gen->add_option("--out", gen_args.out, "scene directory")->required();
  gen->add_option("--seed", gen_args.seed, "scene rng seed");
  gen->add_option("--instances", gen_spec.instances, "instance count");
  gen->add_option("--points", gen_spec.points_per_instance, "points per instance");
  gen->add_option("--spread", gen_spec.spread, "instance extent in meters");
  gen->add_option("--shape", gen_shape, "ellipsoid, slab or plane");
  gen->add_option("--channels", gen_spec.feature_channels, "feature map channels (0 = none)");
  gen->add_option("--width", gen_spec.image_width, "image width");
  gen->add_option("--height", gen_spec.image_height, "image height");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_args, run_k, run_seeds, run_fixtures, run_dump_assignments);
    if (*eval)
      return cmd_eval_mdu(eval_args, eval_k, eval_holdout, eval_radius, eval_pairing, eval_seeds);
    if (*bench) return cmd_bench_gma(bench_args, bench_sizes, bench_l, bench_radius, bench_repeats);
    if (*gen) {
      // Reuse the config machinery's shape names for the flag.
      gen_spec.shape = parse_generate_spec("gen:shape=" + gen_shape).shape;
      if (gen_args.seed) gen_spec.rng_seed = *gen_args.seed;
      return cmd_gen_scene(gen_args, gen_spec);
    }
    throw ConfigError("no subcommand given");
  } catch (const ConfigError& e) {
    std::cerr << "voxfuse: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "voxfuse: " << e.what() << "\n";
    return 1;
  }
}
