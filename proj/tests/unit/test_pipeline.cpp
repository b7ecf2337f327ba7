#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "etomo/pipeline/benchmark.hpp"

using namespace etomo;
using namespace etomo::pipeline;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig c = default_config();
  c.phantom.image_size = 32;
  c.phantom.count_min = 3;
  c.phantom.count_max = 5;
  c.phantom.radius_min = 2;
  c.phantom.radius_max = 4;
  c.sirt.iterations = 20;
  c.cstv.iterations = 30;
  c.dip.iterations = 4;
  c.dip.z_channels = 2;
  c.train.epochs = 2;
  c.train.batch = 2;
  c.unet.channels = {2, 4};
  c.benchmark_phantoms = 2;
  c.train_phantoms = 3;
  for (auto& s : c.scenarios) {
    s.cstv_lambda = 0.1;
    s.dip_lambda = 1e-3;
  }
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("etomo_test_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config: JSON round trip and defaults") {
  const RunConfig c = tiny_config();
  const auto j = config_to_json(c);
  const RunConfig back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.scenarios.size() == 3);
  CHECK(back.scenario("lim60_10").scenario.step_deg == 10.0);
  CHECK(back.unet == c.unet);

  // Missing sections fall back to defaults.
  const RunConfig d = config_from_json(io::Json::object());
  CHECK(config_to_json(d) == config_to_json(default_config()));
  CHECK(json_hash(j) == json_hash(config_to_json(back)));
  CHECK(json_hash(j) != json_hash(config_to_json(d)));
}

TEST_CASE("config: invalid documents are rejected") {
  auto j = config_to_json(tiny_config());
  auto bad = j;
  bad["sirt"]["iters"] = 3;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["surprise"] = 1;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["scenarios"].push_back(bad["scenarios"][0]);
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["reference"]["step"] = 2.0;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["scenarios"] = io::Json::array();
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["scenarios"][1]["cstv_lambda"] = -1.0;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["scenarios"][0]["name"] = "reference";
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["train"]["alpha"] = 2.0;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["unet"]["in_channels"] = 3;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  CHECK_THROWS_AS(tiny_config().scenario("nope"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/etomo.json"), ConfigError);
}

TEST_CASE("evaluate: self comparison and JSON round trip") {
  phantom::PhantomSpec s;
  s.image_size = 64;
  s.count_min = 5;
  s.count_max = 10;
  s.seed = 3;
  const auto x = phantom::generate_phantom(s).image;
  const Metrics m = evaluate(x, x);
  CHECK(m.ssim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::isinf(m.psnr));
  CHECK(m.f1 == 1.0);
  CHECK(m.particles.count() > 0);
  const Metrics back = metrics_from_json(io::Json::parse(metrics_to_json(m).dump()));
  CHECK(std::isinf(back.psnr));
  CHECK(back.ssim == m.ssim);
  REQUIRE(back.particles.count() == m.particles.count());
  CHECK(back.particles.mean_shape() == m.particles.mean_shape());
  CHECK(metrics_to_json(back) == metrics_to_json(m));
  CHECK(fmt(0.5, 2) == "0.50");
  CHECK(fmt(INFINITY) == "inf");
}

TEST_CASE("aggregate and ordering checks") {
  Metrics a, b;
  a.ssim = 0.5;
  a.psnr = 20;
  a.f1 = 0.8;
  a.particles.particles.resize(2);
  a.particles.particles[0].size = 10;
  a.particles.particles[0].shape = 0.5;
  a.particles.particles[1].size = 20;
  a.particles.particles[1].shape = 1.0;
  b = a;
  b.ssim = 0.7;
  b.particles.particles.resize(1);
  const auto c = aggregate({a, b});
  CHECK(c.ssim == doctest::Approx(0.6));
  CHECK(c.count == 3);
  CHECK(c.mean_size == doctest::Approx(40.0 / 3));
  CHECK(c.mean_shape == doctest::Approx(2.0 / 3));

  Summary s;
  s.methods = method_ids();
  for (const auto& sc : default_config().scenarios) s.scenarios.push_back(sc.scenario);
  // Rows: sirt, cstv, unet, dip-tv.
  const double ssim[4][3] = {{0.80, 0.70, 0.60}, {0.81, 0.75, 0.60}, {0.84, 0.72, 0.70}, {0.84, 0.76, 0.59}};
  for (int m = 0; m < 4; ++m) {
    s.cells.emplace_back();
    for (int k = 0; k < 3; ++k) {
      CellSummary cell;
      cell.ssim = ssim[m][k];
      s.cells.back().push_back(cell);
    }
  }
  const auto checks = ordering_checks(s);
  REQUIRE(checks.size() == 11);
  auto find = [&](const std::string& id, const std::string& sc) {
    for (const auto& c : checks) {
      if (c.id == id && c.scenario == sc) return c.pass;
    }
    FAIL("missing check " << id << " " << sc);
    return false;
  };
  CHECK(find("a", "lim60_2"));
  CHECK(find("a", "lim30_2"));
  CHECK(find("b", "lim60_2"));
  CHECK(find("b", "lim60_10"));
  CHECK_FALSE(find("b", "lim30_2"));
  CHECK(find("c", "lim60_10"));
  CHECK_FALSE(find("c", "lim30_2"));
  CHECK(find("d", "lim60_2"));
  CHECK_FALSE(find("d", "lim60_10"));
  const auto report = ordering_report(checks);
  CHECK(report.find("overall: FAIL") != std::string::npos);
  CHECK(s.to_csv().substr(0, 21) == "method,lim60_2_ssim,l");
}

TEST_CASE("training log CSV") {
  std::vector<deep::EpochLog> log{{0, 0.5, 0.6}, {1, 0.4, 0.55}};
  const auto csv = training_log_csv(log);
  CHECK(csv == "epoch,train_loss,val_loss\n0,0.50000000,0.60000000\n1,0.40000000,0.55000000\n");
}

TEST_CASE("benchmark: complete, resumable, reproducible, drift-free") {
  const RunConfig cfg = tiny_config();
  const fs::path out = scratch("bench");
  BenchmarkOptions opt;
  opt.out_dir = out;
  opt.jobs = 2;
  const auto r1 = run_benchmark(cfg, opt);
  CHECK(r1.stages_cached == 0);
  CHECK(r1.stages_run > 0);

  // Every method x scenario cell is populated.
  const auto& s = r1.summary;
  REQUIRE(s.methods.size() == 4);
  REQUIRE(s.scenarios.size() == 3);
  for (const auto& row : s.cells) {
    REQUIRE(row.size() == 3);
    for (const auto& c : row) {
      CHECK(std::isfinite(c.ssim));
      CHECK(std::isfinite(c.psnr));
      CHECK(std::isfinite(c.f1));
      CHECK(std::isfinite(c.mean_size));
      CHECK(std::isfinite(c.mean_shape));
    }
  }
  const std::string csv = io::read_file(out / "summary.csv");
  CHECK(csv == s.to_csv());
  int lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 5);
  for (const char* f : {"ground_truth.csv", "histograms.csv", "ordering_report.txt", "config.json",
                        "models/unet_lim60_2.etck", "models/unet_lim60_2_log.csv"}) {
    CHECK_MESSAGE(fs::exists(out / f), f);
  }
  CHECK(r1.checks.size() == 11);

  // Rerun is fully cached and byte-identical.
  opt.jobs = 1;
  const auto r2 = run_benchmark(cfg, opt);
  CHECK(r2.stages_run == 0);
  CHECK(r2.stages_cached == r1.stages_run);
  CHECK(io::read_file(out / "summary.csv") == csv);

  // A fresh serial run reproduces the parallel one.
  const fs::path out2 = scratch("bench2");
  opt.out_dir = out2;
  run_benchmark(cfg, opt);
  CHECK(io::read_file(out2 / "summary.csv") == csv);
  CHECK(io::file_hash(out2 / "models/unet_lim30_2.etck") == io::file_hash(out / "models/unet_lim30_2.etck"));

  // Summary cells equal metrics recomputed from the stored artifacts.
  for (const auto& method : method_ids()) {
    for (const auto& sc : s.scenarios) {
      std::vector<Metrics> ms;
      for (int i = 0; i < cfg.benchmark_phantoms; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "%05d.etaf", i);
        ms.push_back(evaluate(io::read_image(out / "bench/recon" / method / sc.name / name),
                              io::read_image(out / "bench/recon/sirt/reference" / name)));
      }
      const auto c = aggregate(ms);
      const auto& d = s.at(method, sc.name);
      CHECK(c.ssim == d.ssim);
      CHECK(c.psnr == d.psnr);
      CHECK(c.f1 == d.f1);
      CHECK(c.count == d.count);
      CHECK(c.mean_shape == d.mean_shape);
    }
  }

  // Changing one weight reruns only the affected reconstructions and their metrics.
  RunConfig changed = cfg;
  changed.scenarios[0].cstv_lambda = 0.2;
  opt.out_dir = out;
  const auto r3 = run_benchmark(changed, opt);
  CHECK(r3.stages_run == 2 * cfg.benchmark_phantoms);
  fs::remove_all(out2);
}

TEST_CASE("benchmark: a failing stage is named and earlier products survive") {
  RunConfig cfg = tiny_config();
  cfg.scenarios.resize(1);
  const fs::path out = scratch("fail");
  BenchmarkOptions opt;
  opt.out_dir = out;
  run_benchmark(cfg, opt);
  // Corrupt one benchmark sinogram behind the cache's back.
  const fs::path sino = out / "bench/data/sino_00001_lim60_2.etaf";
  REQUIRE(fs::exists(sino));
  io::write_file_atomic(sino, "garbage");
  try {
    run_benchmark(cfg, opt);
    FAIL("expected a stage failure");
  } catch (const StageError& e) {
    CHECK(e.stage().find("00001") != std::string::npos);
  }
  CHECK(fs::exists(out / "bench/recon/sirt/reference/00000.etaf"));
  CHECK(fs::exists(out / "models/unet_lim60_2.etck"));
  fs::remove_all(out);
}
