#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "voxfuse/config.hpp"
#include "voxfuse/fusion.hpp"
#include "voxfuse/harness.hpp"
#include "voxfuse/scene_io.hpp"

using namespace voxfuse;
using testutil::TempDir;
using testutil::run_cli;
using testutil::slurp;

TEST_CASE("feature grids survive the binary round trip") {
  Rng rng(601);
  FeatureMap fm = FeatureMap::zeros(3, 2, 4);
  for (auto& v : fm.data) v = static_cast<float>(rng.uniform(-5.0, 5.0));

  TempDir dir;
  const std::string path = dir.sub("features_0.bin");
  write_feature_bin(fm, path);
  const FeatureMap back = load_feature_bin(path);
  CHECK(back.width == fm.width);
  CHECK(back.height == fm.height);
  CHECK(back.channels == fm.channels);
  CHECK(back.data == fm.data);
}

TEST_CASE("a truncated feature file names the offending path") {
  TempDir dir;
  const std::string path = dir.sub("broken.bin");
  FeatureMap fm = FeatureMap::zeros(4, 4, 2);
  write_feature_bin(fm, path);
  std::filesystem::resize_file(path, 12 + 7);  // header plus a torn payload

  try {
    load_feature_bin(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(path) != std::string::npos);
  }
  CHECK_THROWS_AS(load_feature_bin(dir.sub("missing.bin")), ConfigError);
}

TEST_CASE("BEV maps round trip through their binary format") {
  const auto t = oracles::make_tensor(
      {{{2, -1, 0}, {1.0f, 2.0f}}, {{2, -1, 3}, {5.0f, 0.5f}}, {{4, 0, 1}, {-1.0f, 3.0f}}},
      Modality::Both, 2);
  const BevMap bev = flatten_to_bev(t);

  TempDir dir;
  write_bev_bin(bev, dir.sub("bev.bin"));
  const BevMap back = load_bev_bin(dir.sub("bev.bin"));
  CHECK(back.width == bev.width);
  CHECK(back.height == bev.height);
  CHECK(back.channels == bev.channels);
  CHECK(back.data == bev.data);
}

TEST_CASE("linear and kernel fixtures round trip through JSON exactly") {
  Rng rng(607);
  const LinearParams p = oracles::random_linear(rng, 3, 7, 0.8);
  const ConvKernel k = oracles::random_kernel(rng, 3, 2, 4);

  TempDir dir;
  write_params_json(p, dir.sub("p.json"));
  const LinearParams p2 = load_params_json(dir.sub("p.json"));
  CHECK(p2.out == p.out);
  CHECK(p2.in == p.in);
  CHECK(p2.weight == p.weight);
  CHECK(p2.bias == p.bias);

  write_kernel_json(k, dir.sub("k.json"));
  const ConvKernel k2 = load_kernel_json(dir.sub("k.json"));
  CHECK(k2.extent == k.extent);
  CHECK(k2.in_channels == k.in_channels);
  CHECK(k2.out_channels == k.out_channels);
  CHECK(k2.weights == k.weights);
  CHECK(k2.bias == k.bias);

  CHECK_THROWS_AS(load_params_json(dir.sub("absent.json")), ConfigError);
}

TEST_CASE("scene directories round trip points, cameras, masks and features") {
  SceneSpec spec;
  spec.instances = 3;
  spec.points_per_instance = 40;
  spec.rng_seed = 19;
  spec.feature_channels = 2;
  const auto synth = generate_scene(spec);

  TempDir dir;
  write_scene(synth.scene, dir.str());
  const Scene back = load_scene(dir.str());

  REQUIRE(back.points.size() == synth.scene.points.size());
  for (std::size_t i = 0; i < back.points.size(); ++i)
    CHECK(back.points[i] == synth.scene.points[i]);

  REQUIRE(back.cameras.size() == 1);
  const CameraView& a = synth.scene.cameras[0];
  const CameraView& b = back.cameras[0];
  CHECK(b.id == a.id);
  CHECK(b.cam.fx == a.cam.fx);
  CHECK(b.cam.fy == a.cam.fy);
  CHECK(b.cam.cx == a.cam.cx);
  CHECK(b.cam.cy == a.cam.cy);
  CHECK(b.cam.width == a.cam.width);
  CHECK(b.cam.height == a.cam.height);
  CHECK(b.cam.rotation.m == a.cam.rotation.m);
  CHECK(b.cam.translation == a.cam.translation);
  REQUIRE(b.masks.size() == a.masks.size());
  for (std::size_t m = 0; m < a.masks.size(); ++m) {
    CHECK(b.masks[m].instance_id() == a.masks[m].instance_id());
    CHECK(b.masks[m].cells() == a.masks[m].cells());
  }
  CHECK(b.features.data == a.features.data);

  CHECK_THROWS_AS(load_scene(dir.sub("nowhere")), ConfigError);
}

TEST_CASE("run configs round trip and reject malformed input") {
  RunConfig cfg;
  cfg.rng_seed = 42;
  cfg.channels = 6;
  cfg.seeds_per_instance = 20;
  cfg.k = 4;
  cfg.gma_l = 256;
  cfg.gma_radius = 3.5;
  cfg.scale_overrides.push_back({2, std::size_t{128}, 2.0});
  cfg.base_voxel_size = {0.1, 0.1, 0.25};
  cfg.num_scales = 3;
  cfg.generate = SceneSpec{};
  cfg.generate->instances = 5;
  cfg.generate->shape = SceneSpec::Shape::Slab;
  cfg.dump_assignments = true;

  TempDir dir;
  const std::string path = dir.sub("config.json");
  save_run_config(cfg, path);
  const RunConfig back = load_run_config(path);
  CHECK(back.rng_seed == cfg.rng_seed);
  CHECK(back.channels == cfg.channels);
  CHECK(back.seeds_per_instance == cfg.seeds_per_instance);
  CHECK(back.k == cfg.k);
  CHECK(back.gma_l == cfg.gma_l);
  CHECK(back.gma_radius == cfg.gma_radius);
  REQUIRE(back.scale_overrides.size() == 1);
  CHECK(back.scale_overrides[0].scale == 2);
  CHECK(back.scale_overrides[0].gma_l == std::size_t{128});
  CHECK(back.scale_overrides[0].gma_radius == 2.0);
  CHECK(back.base_voxel_size == cfg.base_voxel_size);
  CHECK(back.num_scales == cfg.num_scales);
  REQUIRE(back.generate.has_value());
  CHECK(back.generate->instances == 5);
  CHECK(back.generate->shape == SceneSpec::Shape::Slab);
  CHECK(back.dump_assignments == cfg.dump_assignments);
  CHECK(!back.scene_dir.has_value());

  // Unknown keys are configuration typos, not extension points.
  auto j = nlohmann::json::parse(slurp(path));
  j["bogus_knob"] = 1;
  testutil::TempDir dir2;
  std::ofstream(dir2.sub("bad.json")) << j.dump(2);
  CHECK_THROWS_AS(load_run_config(dir2.sub("bad.json")), ConfigError);

  j.erase("bogus_knob");
  j["scene_dir"] = "somewhere";  // conflicts with the generate block
  std::ofstream(dir2.sub("conflict.json")) << j.dump(2);
  CHECK_THROWS_AS(load_run_config(dir2.sub("conflict.json")), ConfigError);

  CHECK_THROWS_AS(load_run_config(dir2.sub("missing.json")), ConfigError);
}

TEST_CASE("generate recipes parse strictly") {
  const SceneSpec spec =
      parse_generate_spec("gen:instances=10,points=200,spread=1.0,shape=slab,seed=7");
  CHECK(spec.instances == 10);
  CHECK(spec.points_per_instance == 200);
  CHECK(spec.spread == 1.0);
  CHECK(spec.shape == SceneSpec::Shape::Slab);
  CHECK(spec.rng_seed == 7);

  CHECK_THROWS_AS(parse_generate_spec("instances=10"), ConfigError);
  CHECK_THROWS_AS(parse_generate_spec("gen:wat=1"), ConfigError);
  CHECK_THROWS_AS(parse_generate_spec("gen:instances=ten"), ConfigError);
  CHECK_THROWS_AS(parse_generate_spec("gen:shape=cube"), ConfigError);
  CHECK_THROWS_AS(parse_generate_spec("gen:instances=0"), ConfigError);
}

TEST_CASE("fixture stand-ins are deterministic and round trip to disk") {
  const Fixtures a = default_fixtures(11, 4, 2);
  const Fixtures b = default_fixtures(11, 4, 2);
  CHECK(a.point_encoder.weight == b.point_encoder.weight);
  CHECK(a.voxel_gate.weight == b.voxel_gate.weight);
  REQUIRE(a.lidar_kernels.size() == 2);
  CHECK(a.lidar_kernels[0].weights == b.lidar_kernels[0].weights);
  CHECK(a.fuse_kernels[1].bias == b.fuse_kernels[1].bias);

  const Fixtures other = default_fixtures(12, 4, 2);
  CHECK(a.point_encoder.weight != other.point_encoder.weight);

  TempDir dir;
  write_fixtures(a, dir.str());
  const Fixtures back = load_fixtures(dir.str(), 4, 2);
  CHECK(back.point_encoder.weight == a.point_encoder.weight);
  CHECK(back.depth_aware.weight == a.depth_aware.weight);
  CHECK(back.seed_gate.bias == a.seed_gate.bias);
  CHECK(back.lc_proj.weight == a.lc_proj.weight);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(back.lidar_kernels[s].weights == a.lidar_kernels[s].weights);
    CHECK(back.joint_lidar_kernels[s].weights == a.joint_lidar_kernels[s].weights);
    CHECK(back.joint_camera_kernels[s].weights == a.joint_camera_kernels[s].weights);
    CHECK(back.joint_both_kernels[s].weights == a.joint_both_kernels[s].weights);
    CHECK(back.fuse_kernels[s].weights == a.fuse_kernels[s].weights);
  }

  try {
    load_fixtures(dir.sub("absent"), 4, 2);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("absent") != std::string::npos);
  }
}

TEST_CASE("report CSV formats are stable") {
  std::vector<MduReport> reports;
  reports.push_back({1, 0.5, 0.25, 300});
  reports.push_back({6, 0.125, 1.0, 1800});
  CHECK(mdu_reports_csv(reports) ==
        "k,mean_error,recall,nvpf\n1,0.5,0.25,300\n6,0.125,1,1800\n");

  BenchRow row;
  row.m = 10;
  row.n = 20;
  row.times_ms = {2.0, 1.0, 4.0};
  row.median_ms = 2.0;
  const std::string csv = bench_rows_csv({row});
  CHECK(csv == "m,n,repeats,median_ms,min_ms,max_ms\n10,20,3,2,1,4\n");
}

TEST_CASE("the CLI builds a scene, runs the pipeline and replays byte for byte") {
  TempDir dir;
  const std::string scene_dir = dir.sub("scene");
  const auto gen = run_cli("gen-scene --out " + scene_dir +
                           " --instances 2 --points 60 --channels 8 --seed 3");
  REQUIRE(gen.exit_code == 0);
  CHECK(std::filesystem::exists(scene_dir + "/points.csv"));

  const std::string out_a = dir.sub("out_a");
  const std::string out_b = dir.sub("out_b");
  const std::string run_args = " --scene " + scene_dir + " --seed 3 --dump-assignments";
  const auto run_a = run_cli("run --out " + out_a + run_args);
  REQUIRE(run_a.exit_code == 0);
  const auto run_b = run_cli("run --out " + out_b + run_args);
  REQUIRE(run_b.exit_code == 0);

  std::vector<std::string> files = {"bev_lidar.bin", "bev_multimodal.bin", "metrics.json"};
  for (int s = 0; s < 4; ++s) {
    files.push_back("fused_scale_" + std::to_string(s) + ".csv");
    files.push_back("assignments_s" + std::to_string(s) + ".csv");
  }
  for (const auto& f : files) {
    INFO(f);
    REQUIRE(std::filesystem::exists(out_a + "/" + f));
    CHECK(slurp(out_a + "/" + f) == slurp(out_b + "/" + f));
  }

  const auto metrics = nlohmann::json::parse(slurp(out_a + "/metrics.json"));
  CHECK(metrics["nvpf"].get<std::int64_t>() == count_nvpf(2, 50, 6));
  CHECK(metrics["scales"].size() == 4);
}

TEST_CASE("the virtual point budget scales with k") {
  TempDir dir;
  const std::string scene = "gen:instances=3,points=50,seed=9";
  const auto a = run_cli("run --scene " + scene + " --out " + dir.sub("k1") + " --k 1");
  REQUIRE(a.exit_code == 0);
  const auto b = run_cli("run --scene " + scene + " --out " + dir.sub("k6") + " --k 6");
  REQUIRE(b.exit_code == 0);
  const auto m1 = nlohmann::json::parse(slurp(dir.sub("k1") + "/metrics.json"));
  const auto m6 = nlohmann::json::parse(slurp(dir.sub("k6") + "/metrics.json"));
  CHECK(m6["nvpf"].get<std::int64_t>() == 6 * m1["nvpf"].get<std::int64_t>());
}

TEST_CASE("eval-mdu reproduces the library evaluation exactly") {
  TempDir dir;
  const std::string recipe = "gen:instances=4,points=100,shape=slab,seed=41";
  const std::string report_path = dir.sub("report.csv");
  const auto res = run_cli("eval-mdu --scene " + recipe + " --k 1,3,6,10 --out " + report_path);
  REQUIRE(res.exit_code == 0);

  const auto synth = generate_scene(parse_generate_spec(recipe));
  std::vector<MduReport> reports;
  for (const std::size_t k : {1, 3, 6, 10})
    reports.push_back(holdout_eval(synth, 0.5, k, 0.23, ErrorPairing::OwnSeed, 50));
  CHECK(slurp(report_path) == mdu_reports_csv(reports));

  const std::string lines = slurp(report_path);
  CHECK(lines.rfind("k,mean_error,recall,nvpf\n", 0) == 0);
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 5);
}

TEST_CASE("the benchmark subcommand writes the expected table") {
  TempDir dir;
  const std::string path = dir.sub("bench.csv");
  const auto res = run_cli("bench-gma --sizes 50x50,100x100 --l 16 --repeats 1 --out " + path);
  REQUIRE(res.exit_code == 0);
  const std::string csv = slurp(path);
  CHECK(csv.rfind("m,n,repeats,median_ms,min_ms,max_ms\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.find("\n50,50,1,") != std::string::npos);
  CHECK(csv.find("\n100,100,1,") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
  TempDir dir;
  CHECK(run_cli("frobnicate").exit_code == 2);
  CHECK(run_cli("").exit_code == 2);  // a subcommand is required
  CHECK(run_cli("bench-gma --out " + dir.sub("b.csv")).exit_code == 2);  // --sizes missing
  CHECK(run_cli("bench-gma --sizes 10y10 --out " + dir.sub("b.csv")).exit_code == 2);
  CHECK(run_cli("run --out " + dir.sub("o")).exit_code == 2);  // no scene anywhere

  const auto empty_k =
      run_cli("eval-mdu --scene gen:instances=2,points=30,seed=1 --k , --out " + dir.sub("r.csv"));
  CHECK(empty_k.exit_code == 2);
  const auto bad_k = run_cli("eval-mdu --scene gen:instances=2,points=30,seed=1 --k 3,zero --out " +
                             dir.sub("r.csv"));
  CHECK(bad_k.exit_code == 2);
  const auto bad_pairing = run_cli(
      "eval-mdu --scene gen:instances=2,points=30,seed=1 --pairing sideways --out " +
      dir.sub("r.csv"));
  CHECK(bad_pairing.exit_code == 2);

  const std::string missing_fx = dir.sub("no_fixtures_here");
  const auto fx = run_cli("run --scene gen:instances=2,points=30,seed=1 --fixtures " + missing_fx +
                          " --out " + dir.sub("o2"));
  CHECK(fx.exit_code == 2);
  CHECK(fx.err.find(missing_fx) != std::string::npos);

  const auto bad_scene_dir = run_cli("run --scene " + dir.sub("ghost") + " --out " + dir.sub("o3"));
  CHECK(bad_scene_dir.exit_code == 2);
  CHECK(bad_scene_dir.err.find("ghost") != std::string::npos);
}
