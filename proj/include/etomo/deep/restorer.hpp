#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "etomo/deep/unet.hpp"

namespace etomo::deep {

/// Degraded and reference reconstructions of the same phantom.
struct TrainingPair {
  proj::Image2D x_deg;
  proj::Image2D x_ref;
  std::string scenario;
};

struct TrainConfig {
  int epochs = 30;
  int batch = 4;
  double lr = 3e-4;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  /// Share of the pairs held out for validation by the single-list overload.
  double validation_fraction = 0.1;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // mean batch loss seen during the epoch
  double val_loss = 0.0;    // after the epoch; equals train_loss without a validation set
};

struct TrainResult {
  UNet<float> model;  // parameters of the best validation epoch
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = 0.0;
};

using TrainProgress = std::function<void(const EpochLog&)>;

/// Mini-batch Adam on mixed_loss(x_ref, F(x_deg)) with L = range of x_ref.
/// Pairs are reshuffled every epoch from a seed derived from cfg.seed. Each
/// batch averages the per-pair gradients. Throws recon::DivergenceError on a
/// non-finite loss, naming epoch and batch.
TrainResult train_restorer(const std::vector<TrainingPair>& train,
                           const std::vector<TrainingPair>& validation, const TrainConfig& cfg,
                           const UNetSpec& spec, const TrainProgress& progress = {});

/// Splits `pairs` with a seeded permutation: round(validation_fraction * n)
/// pairs (at least one when n >= 2 and the fraction is positive) go to
/// validation.
TrainResult train_restorer(const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
                           const UNetSpec& spec, const TrainProgress& progress = {});

/// Mean mixed loss of the model over `pairs`.
double evaluate_loss(const UNet<float>& model, const std::vector<TrainingPair>& pairs,
                     double alpha);

/// x = F(x_deg): reflect-pad to the network multiple, run, crop back.
proj::Image2D restore(const UNet<float>& model, const proj::Image2D& x_deg);

}  // namespace etomo::deep
