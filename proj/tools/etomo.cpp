// etomo: dataset generation, projection, reconstruction, training, analysis
// and the benchmark. Exit codes: 0 success, 2 usage or configuration error,
// 1 runtime failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "etomo/core/random.hpp"
#include "etomo/deep/checkpoint.hpp"
#include "etomo/pipeline/benchmark.hpp"

namespace fs = std::filesystem;
using namespace etomo;
using pipeline::ConfigError;
using io::Json;

namespace {

// Usage errors detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kMethods{"sirt", "cstv", "dip", "dip-tv", "unet-restore"};

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
};

pipeline::RunConfig load(const Globals& g) {
  auto cfg = g.config.empty() ? pipeline::default_config() : pipeline::load_config(g.config);
  if (g.seed) cfg.master_seed = *g.seed;
  cfg.validate();
  return cfg;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out is required");
  return g.out;
}

// Scenario by name; the reference is addressable as well.
proj::Scenario find_scenario(const pipeline::RunConfig& cfg, const std::string& name) {
  if (name == cfg.reference.name) return cfg.reference;
  for (const auto& s : cfg.scenarios) {
    if (s.scenario.name == name) return s.scenario;
  }
  std::string known = cfg.reference.name;
  for (const auto& s : cfg.scenarios) known += ", " + s.scenario.name;
  throw ConfigError("unknown scenario '" + name + "' (defined: " + known + ")");
}

// Tuned weight of the scenario whose geometry matches `g`, if any.
std::optional<pipeline::ScenarioConfig> scenario_for(const pipeline::RunConfig& cfg,
                                                     const proj::TiltGeometry& g) {
  for (const auto& s : cfg.scenarios) {
    if (s.scenario.geometry(g.height, g.width, g.n_detector).angles_deg == g.angles_deg) return s;
  }
  return std::nullopt;
}

void cmd_phantom(const Globals& g, int n) {
  const auto cfg = load(g);
  const fs::path out = require_out(g);
  phantom::DatasetOptions o;
  o.n = n;
  o.master_seed = cfg.master_seed;
  o.spec = cfg.phantom;
  for (const auto& s : cfg.scenarios) o.scenarios.push_back(s.scenario);
  o.reference = cfg.reference;
  o.noise_sigma = cfg.noise_sigma;
  const auto ds = phantom::generate_dataset(o, out);
  std::cout << ds.manifest.string() << "\n";
}

void cmd_project(const Globals& g, const std::string& input, const std::string& scenario,
                 bool noise) {
  const auto cfg = load(g);
  const fs::path out = require_out(g);
  const auto x = io::read_image(input);
  const auto sc = find_scenario(cfg, scenario);
  auto y = proj::forward_project(x, sc.geometry(x.height, x.width));
  const std::uint64_t seed = derive_seed(cfg.master_seed, "project-noise");
  if (noise && cfg.noise_sigma > 0.0) y = proj::add_noise(y, cfg.noise_sigma, seed);
  io::write_sinogram(out, y,
                     {{"source", io::file_hash(input)},
                      {"scenario", io::scenario_to_json(sc)},
                      {"noise_sigma", noise ? cfg.noise_sigma : 0.0},
                      {"seed", seed}});
}

void cmd_reconstruct(const Globals& g, const std::string& method, const std::string& input,
                     std::optional<double> lambda, const std::string& checkpoint) {
  if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end()) {
    std::string list;
    for (const auto& m : kMethods) list += (list.empty() ? "" : ", ") + m;
    throw UsageError("unknown method '" + method + "'; valid methods: " + list);
  }
  const auto cfg = load(g);
  const fs::path out = require_out(g);
  const Json cj = pipeline::config_to_json(cfg);
  Json prov{{"method", method}, {"input", io::file_hash(input)}};
  proj::Image2D x;

  if (method == "unet-restore") {
    if (checkpoint.empty()) throw UsageError("unet-restore needs --checkpoint");
    const auto a = io::read_artifact(input);
    if (a.kind != io::Kind::image) {
      throw io::FormatError(input + ": unet-restore expects an image, got a " + io::to_string(a.kind));
    }
    const auto ck = deep::read_checkpoint(checkpoint);
    x = deep::restore(ck.model, io::to_image(a, input));
    prov["checkpoint"] = io::file_hash(checkpoint);
  } else {
    const auto a = io::read_artifact(input);
    if (a.kind != io::Kind::sinogram) {
      throw io::FormatError(input + ": " + method + " expects a sinogram, got a " + io::to_string(a.kind));
    }
    const auto y = io::to_sinogram(a, input);
    const auto tuned = scenario_for(cfg, y.geometry);
    Json params;
    if (method == "sirt") {
      x = recon::sirt_reconstruct(y, y.geometry, cfg.sirt);
      params = cj["sirt"];
    } else if (method == "cstv") {
      recon::CsTvConfig c = cfg.cstv;
      c.lambda = lambda ? *lambda : (tuned ? tuned->cstv_lambda : 0.0);
      x = recon::cstv_reconstruct(y, y.geometry, c);
      params = cj["cstv"];
      params["lambda"] = c.lambda;
    } else {
      deep::DipConfig d = cfg.dip;
      // Plain DIP is DIP-TV without the penalty unless a weight is given.
      if (lambda) {
        d.lambda_tv = *lambda;
      } else {
        d.lambda_tv = method == "dip-tv" && tuned ? tuned->dip_lambda : 0.0;
      }
      d.seed = derive_seed(cfg.master_seed, "dip");
      const auto r = deep::dip_reconstruct(y, y.geometry, d, cfg.unet, [](int it, double loss) {
        if (it % 100 == 0) std::fprintf(stderr, "iteration %d loss %.6g\n", it, loss);
      });
      x = r.image;
      params = cj["dip"];
      params["lambda"] = d.lambda_tv;
      params["unet"] = cj["unet"];
      prov["best_iteration"] = r.best_iteration;
      prov["best_loss"] = r.best_loss;
    }
    prov["params"] = params;
    prov["config_hash"] = pipeline::json_hash(params);
  }
  prov["seed"] = cfg.master_seed;
  io::write_image(out, x, prov);
}

void cmd_train(const Globals& g, const std::string& data, const std::string& scenario) {
  const auto cfg = load(g);
  const fs::path out = require_out(g);
  fs::path manifest = data;
  if (fs::is_directory(manifest)) manifest /= "manifest.json";
  const auto ds = phantom::load_dataset(manifest);
  if (std::find_if(ds.scenarios.begin(), ds.scenarios.end(),
                   [&](const proj::Scenario& s) { return s.name == scenario; }) == ds.scenarios.end()) {
    throw std::runtime_error(manifest.string() + ": dataset has no sinograms for scenario '" +
                             scenario + "'");
  }
  const auto pairs = pipeline::training_pairs(ds, scenario, cfg.sirt);
  deep::TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.master_seed, "train:" + scenario);
  const auto r = deep::train_restorer(pairs, tc, cfg.unet, [](const deep::EpochLog& e) {
    std::fprintf(stderr, "epoch %d train %.6f val %.6f\n", e.epoch, e.train_loss, e.val_loss);
  });
  const Json cj = pipeline::config_to_json(cfg);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  deep::write_checkpoint(out, r.model,
                         {{"scenario", scenario},
                          {"seed", tc.seed},
                          {"train", cj["train"]},
                          {"best_epoch", r.best_epoch},
                          {"best_val_loss", r.best_val_loss}});
  fs::path log = out;
  log.replace_extension();
  io::write_file_atomic(log.string() + "_log.csv", pipeline::training_log_csv(r.log));
  std::cout << out.string() << "\n";
}

void cmd_analyze(const Globals& g, const std::string& recon, const std::string& reference) {
  const fs::path out = require_out(g);
  const auto x = io::read_image(recon);
  const auto ref = io::read_image(reference);
  if (x.height != ref.height || x.width != ref.width) {
    throw std::runtime_error("size mismatch: " + recon + " is " + std::to_string(x.height) + "x" +
                             std::to_string(x.width) + ", " + reference + " is " +
                             std::to_string(ref.height) + "x" + std::to_string(ref.width));
  }
  const auto m = pipeline::evaluate(x, ref);
  fs::create_directories(out);
  io::write_file_atomic(out / "metrics.json", pipeline::metrics_to_json(m).dump(2) + "\n");
  const auto& p = m.particles;
  io::write_file_atomic(out / "metrics.csv",
                        "ssim,psnr,f1,count,mean_size,mean_diameter,mean_shape\n" +
                            pipeline::fmt(m.ssim) + "," + pipeline::fmt(m.psnr) + "," +
                            pipeline::fmt(m.f1) + "," + std::to_string(p.count()) + "," +
                            pipeline::fmt(p.mean_size()) + "," + pipeline::fmt(p.mean_diameter()) +
                            "," + pipeline::fmt(p.mean_shape()) + "\n");
  io::write_file_atomic(out / "particles.csv", analysis::particle_table(p));
  if (p.count() > 0) {
    io::write_file_atomic(out / "histograms.csv", analysis::histogram_report({{"recon", p}}));
  }
  std::cout << "ssim " << pipeline::fmt(m.ssim, 4) << "  psnr " << pipeline::fmt(m.psnr, 2)
            << "  f1 " << pipeline::fmt(m.f1, 4) << "  particles " << p.count() << "\n";
}

void cmd_benchmark(const Globals& g) {
  const auto cfg = load(g);
  pipeline::BenchmarkOptions o;
  o.out_dir = require_out(g);
  o.jobs = g.jobs;
  o.log = [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); };
  const auto r = pipeline::run_benchmark(cfg, o);
  std::cout << r.summary.to_csv() << "\n" << pipeline::ordering_report(r.checks);
  std::fprintf(stderr, "stages run %d, cached %d\n", r.stages_run, r.stages_cached);
}

// Grid search of a regularization weight on a tuning ensemble, scored by the
// mean SSIM against each item's reference reconstruction.
void cmd_tune(const Globals& g, const std::string& method, const std::string& data,
              const std::string& scenario, double lo, int decades, int per_decade, int count) {
  if (method != "cstv" && method != "dip-tv") throw UsageError("tune supports cstv and dip-tv");
  const auto cfg = load(g);
  fs::path manifest = data;
  if (fs::is_directory(manifest)) manifest /= "manifest.json";
  const auto ds = phantom::load_dataset(manifest);
  const std::size_t si = ds.scenario_index(scenario);
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(count), ds.items.size());
  std::vector<proj::Sinogram> ys;
  std::vector<proj::Image2D> refs;
  for (std::size_t i = 0; i < n; ++i) {
    ys.push_back(io::read_sinogram(ds.sinogram_path(i, si)));
    const auto yr = io::read_sinogram(ds.sinogram_path(i, ds.scenarios.size()));
    refs.push_back(recon::sirt_reconstruct(yr, yr.geometry, cfg.sirt));
  }
  const auto grid = recon::lambda_grid(lo, decades, per_decade);
  const auto r = recon::grid_search(grid, [&](double lambda) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      proj::Image2D x;
      if (method == "cstv") {
        recon::CsTvConfig c = cfg.cstv;
        c.lambda = lambda;
        x = recon::cstv_reconstruct(ys[i], ys[i].geometry, c);
      } else {
        deep::DipConfig d = cfg.dip;
        d.lambda_tv = lambda;
        d.seed = derive_seed(cfg.master_seed, "tune:" + scenario, i);
        x = deep::dip_reconstruct(ys[i], ys[i].geometry, d, cfg.unet).image;
      }
      s += analysis::ssim_eval(x, refs[i]);
    }
    s /= static_cast<double>(n);
    std::fprintf(stderr, "lambda %.6g ssim %.4f\n", lambda, s);
    return s;
  });
  std::string csv = "lambda,mean_ssim\n";
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    csv += pipeline::fmt(r.values[i], 8) + "," + pipeline::fmt(r.scores[i]) + "\n";
  }
  if (!g.out.empty()) io::write_file_atomic(g.out, csv);
  std::cout << csv << "best " << pipeline::fmt(r.best, 8) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Electron tomography reconstruction and evaluation"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--jobs", g.jobs, "Parallel workers")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output file or directory");

  int n = 0;
  auto* phantom = app.add_subcommand("phantom", "Generate phantoms and their sinograms");
  phantom->fallthrough();
  phantom->add_option("-n,--n", n, "Number of phantoms")->required()->check(CLI::Range(1, 1000000));

  std::string input, scenario, method, checkpoint, data;
  bool noise = false;
  auto* project = app.add_subcommand("project", "Forward-project an image");
  project->fallthrough();
  project->add_option("--input", input, "Image artifact")->required()->check(CLI::ExistingFile);
  project->add_option("--scenario", scenario, "Scenario name from the config")->required();
  project->add_flag("--noise", noise, "Add the configured Gaussian noise");

  std::optional<double> lambda;
  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct a sinogram or restore an image");
  reconstruct->fallthrough();
  reconstruct->add_option("--method", method, "sirt | cstv | dip | dip-tv | unet-restore")->required();
  reconstruct->add_option("--input", input, "Sinogram or image artifact")->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--lambda", lambda, "Regularization weight")->check(CLI::NonNegativeNumber);
  reconstruct->add_option("--checkpoint", checkpoint, "Restorer checkpoint")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Train a restorer for one scenario");
  train->fallthrough();
  train->add_option("--data", data, "Dataset directory or manifest")->required()->check(CLI::ExistingPath);
  train->add_option("--scenario", scenario, "Scenario name")->required();

  std::string recon_path, reference;
  auto* analyze = app.add_subcommand("analyze", "Metrics and morphometry of a reconstruction");
  analyze->fallthrough();
  analyze->add_option("--recon", recon_path, "Reconstruction")->required()->check(CLI::ExistingFile);
  analyze->add_option("--reference", reference, "Reference")->required()->check(CLI::ExistingFile);

  auto* benchmark = app.add_subcommand("benchmark", "Full method by scenario comparison");
  benchmark->fallthrough();

  double lo = 1e-3;
  int decades = 2, per_decade = 5, count = 5;
  auto* tune = app.add_subcommand("tune", "Grid search of a regularization weight");
  tune->fallthrough();
  tune->add_option("--method", method, "cstv | dip-tv")->required();
  tune->add_option("--data", data, "Dataset directory or manifest")->required()->check(CLI::ExistingPath);
  tune->add_option("--scenario", scenario, "Scenario name")->required();
  tune->add_option("--lo", lo, "Smallest weight")->check(CLI::PositiveNumber);
  tune->add_option("--decades", decades, "Decades spanned by the grid")->check(CLI::PositiveNumber);
  tune->add_option("--per-decade", per_decade, "Grid points per decade")->check(CLI::PositiveNumber);
  tune->add_option("--count", count, "Items of the dataset to score")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*phantom) cmd_phantom(g, n);
    if (*project) cmd_project(g, input, scenario, noise);
    if (*reconstruct) cmd_reconstruct(g, method, input, lambda, checkpoint);
    if (*train) cmd_train(g, data, scenario);
    if (*analyze) cmd_analyze(g, recon_path, reference);
    if (*benchmark) cmd_benchmark(g);
    if (*tune) cmd_tune(g, method, data, scenario, lo, decades, per_decade, count);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
