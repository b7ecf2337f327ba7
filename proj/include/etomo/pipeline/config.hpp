#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "etomo/deep/dip.hpp"
#include "etomo/deep/restorer.hpp"
#include "etomo/io/artifact.hpp"
#include "etomo/phantom/phantom.hpp"
#include "etomo/recon/classical.hpp"

namespace etomo::pipeline {

/// Invalid or inconsistent configuration (exit code 2 at the command line).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Acquisition scenario with its tuned regularization weights.
struct ScenarioConfig {
  proj::Scenario scenario;
  double cstv_lambda = 0.0;
  double dip_lambda = 0.0;
};

/// Everything a run needs. Serialized as JSON; see README for the schema.
struct RunConfig {
  std::uint64_t master_seed = 2024;
  phantom::PhantomSpec phantom;
  std::vector<ScenarioConfig> scenarios;
  proj::Scenario reference{"reference", -90.0, 1.0, 90.0};
  double noise_sigma = 0.0;

  recon::SirtConfig sirt;
  recon::CsTvConfig cstv;  // lambda comes from the scenario
  deep::DipConfig dip;     // lambda_tv and seed come from the scenario and cell
  deep::TrainConfig train;
  deep::UNetSpec unet;

  int benchmark_phantoms = 10;
  int train_phantoms = 50;

  /// Throws ConfigError: duplicate or missing scenario names, a reference
  /// that is not [-90:1:90], or any invalid section.
  void validate() const;
  const ScenarioConfig& scenario(const std::string& name) const;
};

/// Three desk-scale scenarios [-60:2:60], [-60:10:60], [-30:2:30] and the
/// default method settings.
RunConfig default_config();

io::Json config_to_json(const RunConfig& c);
/// Missing keys take defaults; unknown keys are rejected.
RunConfig config_from_json(const io::Json& j);
RunConfig load_config(const std::filesystem::path& path);

/// hex64 of the canonical JSON form of `j`.
std::string json_hash(const io::Json& j);

}  // namespace etomo::pipeline
