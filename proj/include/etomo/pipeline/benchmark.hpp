#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "etomo/pipeline/config.hpp"
#include "etomo/pipeline/evaluate.hpp"

namespace etomo::pipeline {

/// A benchmark stage failed. Products of completed stages stay on disk.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error("stage " + stage + " failed: " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

inline const std::vector<std::string>& method_ids() {
  static const std::vector<std::string> ids{"sirt", "cstv", "unet", "dip-tv"};
  return ids;
}
std::string method_label(const std::string& id);

/// Ensemble aggregate of one (method, scenario) cell.
struct CellSummary {
  double ssim = 0.0;  // means over phantoms
  double psnr = 0.0;
  double f1 = 0.0;
  std::size_t count = 0;   // particles over the ensemble
  double mean_size = 0.0;  // over all particles
  double mean_shape = 0.0;
};

struct Summary {
  std::vector<std::string> methods;    // ids, row order
  std::vector<proj::Scenario> scenarios;  // column-group order
  std::vector<std::vector<CellSummary>> cells;  // [method][scenario]

  const CellSummary& at(const std::string& method, const std::string& scenario) const;
  /// Rows = methods, column groups = scenarios:
  /// method,<s>_ssim,<s>_psnr,<s>_f1,<s>_count,<s>_mean_size,<s>_mean_shape,...
  std::string to_csv() const;
};

CellSummary aggregate(const std::vector<Metrics>& per_phantom);

struct OrderingCheck {
  std::string id;  // "a", "b", "c", "d"
  std::string scenario;
  bool pass = false;
  std::string detail;
};

/// Mean-SSIM orderings: (a) CS-TV >= SIRT, (b) DIP-TV >= SIRT + 0.03,
/// (d) SIRT+U-Net >= SIRT + 0.03 in every scenario; (c) DIP-TV >= CS-TV in
/// the scenarios [-60:10:60] and [-30:2:30].
std::vector<OrderingCheck> ordering_checks(const Summary& s);
std::string ordering_report(const std::vector<OrderingCheck>& checks);

struct BenchmarkOptions {
  std::filesystem::path out_dir;
  int jobs = 1;
  std::function<void(const std::string&)> log;
};

struct BenchmarkResult {
  Summary summary;
  std::vector<OrderingCheck> checks;
  int stages_run = 0;
  int stages_cached = 0;
};

/// Generates the benchmark and training ensembles, reconstructs every
/// (phantom, scenario, method) cell plus the references, trains one restorer
/// per scenario, evaluates, and writes summary.csv, ordering_report.txt,
/// histograms.csv and ground_truth.csv. Stages whose inputs are unchanged
/// since a previous run are skipped.
BenchmarkResult run_benchmark(const RunConfig& cfg, const BenchmarkOptions& opt);

/// Header plus one row per epoch: epoch,train_loss,val_loss.
std::string training_log_csv(const std::vector<deep::EpochLog>& log);

/// Builds SIRT training pairs for `scenario` from a generated dataset.
std::vector<deep::TrainingPair> training_pairs(const phantom::Dataset& ds,
                                               const std::string& scenario,
                                               const recon::SirtConfig& sirt);

}  // namespace etomo::pipeline
