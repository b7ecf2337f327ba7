#include "etomo/pipeline/config.hpp"

#include <set>

#include "etomo/core/hash.hpp"
#include "etomo/deep/checkpoint.hpp"

namespace etomo::pipeline {
namespace {

using io::Json;

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

Json sirt_json(const recon::SirtConfig& s) {
  return {{"iterations", s.iterations}, {"nonnegative", s.nonnegative}, {"relaxation", s.relaxation}};
}

recon::SirtConfig sirt_from(const Json& j) {
  reject_unknown(j, {"iterations", "nonnegative", "relaxation"}, "sirt");
  recon::SirtConfig s;
  s.iterations = j.value("iterations", s.iterations);
  s.nonnegative = j.value("nonnegative", s.nonnegative);
  s.relaxation = j.value("relaxation", s.relaxation);
  return s;
}

Json cstv_json(const recon::CsTvConfig& c) {
  return {{"iterations", c.iterations}, {"norm_iterations", c.norm_iterations}};
}

recon::CsTvConfig cstv_from(const Json& j) {
  reject_unknown(j, {"iterations", "norm_iterations"}, "cstv");
  recon::CsTvConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.norm_iterations = j.value("norm_iterations", c.norm_iterations);
  return c;
}

Json dip_json(const deep::DipConfig& d) {
  return {{"iterations", d.iterations},
          {"z_channels", d.z_channels},
          {"z_scale", d.z_scale},
          {"lr", d.lr}};
}

deep::DipConfig dip_from(const Json& j) {
  reject_unknown(j, {"iterations", "z_channels", "z_scale", "lr"}, "dip");
  deep::DipConfig d;
  d.iterations = j.value("iterations", d.iterations);
  d.z_channels = j.value("z_channels", d.z_channels);
  d.z_scale = j.value("z_scale", d.z_scale);
  d.lr = j.value("lr", d.lr);
  return d;
}

Json train_json(const deep::TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch", t.batch},
          {"lr", t.lr},
          {"alpha", t.alpha},
          {"validation_fraction", t.validation_fraction}};
}

deep::TrainConfig train_from(const Json& j) {
  reject_unknown(j, {"epochs", "batch", "lr", "alpha", "validation_fraction"}, "train");
  deep::TrainConfig t;
  t.epochs = j.value("epochs", t.epochs);
  t.batch = j.value("batch", t.batch);
  t.lr = j.value("lr", t.lr);
  t.alpha = j.value("alpha", t.alpha);
  t.validation_fraction = j.value("validation_fraction", t.validation_fraction);
  return t;
}

}  // namespace

void RunConfig::validate() const {
  try {
    phantom.validate();
    sirt.validate();
    cstv.validate();
    deep::DipConfig d = dip;
    d.lambda_tv = 0.0;
    d.validate();
    train.validate();
    unet.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (unet.in_channels != 1) {
    throw ConfigError("unet.in_channels must be 1; the DIP input width is dip.z_channels");
  }
  if (scenarios.empty()) throw ConfigError("config defines no scenarios");
  std::set<std::string> names{reference.name};
  for (const auto& s : scenarios) {
    if (s.scenario.name.empty()) throw ConfigError("scenario without a name");
    if (!names.insert(s.scenario.name).second) {
      throw ConfigError("scenario '" + s.scenario.name + "' is defined more than once");
    }
    if (!(s.cstv_lambda >= 0.0) || !(s.dip_lambda >= 0.0)) {
      throw ConfigError("scenario '" + s.scenario.name + "': lambdas must be >= 0");
    }
    try {
      s.scenario.geometry(phantom.image_size, phantom.image_size).validate();
    } catch (const std::exception& e) {
      throw ConfigError("scenario '" + s.scenario.name + "': " + e.what());
    }
  }
  if (reference.start_deg != -90.0 || reference.step_deg != 1.0 || reference.stop_deg != 90.0) {
    throw ConfigError("reference scenario must be [-90:1:90]");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (benchmark_phantoms < 1) throw ConfigError("benchmark_phantoms must be >= 1");
  if (train_phantoms < 1) throw ConfigError("train_phantoms must be >= 1");
  if (phantom.image_size < ad::kSsimWindow) throw ConfigError("image_size below the SSIM window");
}

const ScenarioConfig& RunConfig::scenario(const std::string& name) const {
  for (const auto& s : scenarios) {
    if (s.scenario.name == name) return s;
  }
  throw ConfigError("unknown scenario '" + name + "'");
}

RunConfig default_config() {
  RunConfig c;
  // Weights tuned on a held-out phantom set (seed 77), not the benchmark phantoms.
  c.scenarios = {{{"lim60_2", -60.0, 2.0, 60.0}, 0.398, 1e-2},
                 {{"lim60_10", -60.0, 10.0, 60.0}, 0.1, 1e-2},
                 {{"lim30_2", -30.0, 2.0, 30.0}, 0.1, 1e-2}};
  return c;
}

Json config_to_json(const RunConfig& c) {
  Json scen = Json::array();
  for (const auto& s : c.scenarios) {
    Json e = io::scenario_to_json(s.scenario);
    e["cstv_lambda"] = s.cstv_lambda;
    e["dip_lambda"] = s.dip_lambda;
    scen.push_back(e);
  }
  return {{"master_seed", c.master_seed},
          {"phantom", phantom::spec_to_json(c.phantom)},
          {"scenarios", scen},
          {"reference", io::scenario_to_json(c.reference)},
          {"noise_sigma", c.noise_sigma},
          {"sirt", sirt_json(c.sirt)},
          {"cstv", cstv_json(c.cstv)},
          {"dip", dip_json(c.dip)},
          {"train", train_json(c.train)},
          {"unet", deep::unet_spec_to_json(c.unet)},
          {"benchmark_phantoms", c.benchmark_phantoms},
          {"train_phantoms", c.train_phantoms}};
}

RunConfig config_from_json(const Json& j) {
  RunConfig c = default_config();
  try {
    reject_unknown(j,
                   {"master_seed", "phantom", "scenarios", "reference", "noise_sigma", "sirt",
                    "cstv", "dip", "train", "unet", "benchmark_phantoms", "train_phantoms"},
                   "config");
    c.master_seed = j.value("master_seed", c.master_seed);
    if (j.contains("phantom")) c.phantom = phantom::spec_from_json(j.at("phantom"));
    if (j.contains("scenarios")) {
      c.scenarios.clear();
      for (const auto& e : j.at("scenarios")) {
        reject_unknown(e, {"name", "start", "step", "stop", "cstv_lambda", "dip_lambda"},
                       "scenario");
        ScenarioConfig s;
        s.scenario = io::scenario_from_json(e);
        s.cstv_lambda = e.value("cstv_lambda", 0.0);
        s.dip_lambda = e.value("dip_lambda", 0.0);
        c.scenarios.push_back(s);
      }
    }
    if (j.contains("reference")) c.reference = io::scenario_from_json(j.at("reference"));
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    if (j.contains("sirt")) c.sirt = sirt_from(j.at("sirt"));
    if (j.contains("cstv")) c.cstv = cstv_from(j.at("cstv"));
    if (j.contains("dip")) c.dip = dip_from(j.at("dip"));
    if (j.contains("train")) c.train = train_from(j.at("train"));
    if (j.contains("unet")) {
      Json u = j.at("unet");
      reject_unknown(u, {"channels", "in_channels"}, "unet");
      if (!u.contains("in_channels")) u["in_channels"] = 1;
      c.unet = deep::unet_spec_from_json(u);
    }
    c.benchmark_phantoms = j.value("benchmark_phantoms", c.benchmark_phantoms);
    c.train_phantoms = j.value("train_phantoms", c.train_phantoms);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(io::read_file(path));
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string json_hash(const io::Json& j) { return hex64(fnv1a64(j.dump())); }

}  // namespace etomo::pipeline
