#include "etomo/deep/restorer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "etomo/core/random.hpp"
#include "etomo/recon/classical.hpp"

namespace etomo::deep {
namespace {

void check_pairs(const std::vector<TrainingPair>& pairs, const char* what) {
  for (const auto& p : pairs) {
    if (p.x_deg.height != p.x_ref.height || p.x_deg.width != p.x_ref.width) {
      throw std::invalid_argument(std::string(what) + ": pair images differ in size");
    }
    if (p.x_ref.height < ad::kSsimWindow || p.x_ref.width < ad::kSsimWindow) {
      throw std::invalid_argument(std::string(what) + ": images smaller than the SSIM window");
    }
  }
}

// Forward pass of one pair with the output cropped back to the image size.
ad::TensorPtr<float> pair_loss(ad::Tape<float>& tape, const UNet<float>& net,
                               const TrainingPair& p, double alpha) {
  const Padding pad = padding_for(p.x_deg.height, p.x_deg.width, net.spec.multiple());
  const auto in = pad_reflect<float>(p.x_deg, pad);
  auto out = net.forward(tape, in);
  if (pad.height != p.x_deg.height || pad.width != p.x_deg.width) {
    out = ad::crop(tape, out, pad.top, pad.left, p.x_deg.height, p.x_deg.width);
  }
  const auto ref = pad_reflect<float>(p.x_ref, padding_for(p.x_ref.height, p.x_ref.width, 1));
  return mixed_loss(tape, ref, out, alpha, data_range(p.x_ref));
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("training epochs must be at least 1");
  if (batch < 1) throw std::invalid_argument("training batch size must be at least 1");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation fraction must lie in [0, 1)");
  }
}

double evaluate_loss(const UNet<float>& model, const std::vector<TrainingPair>& pairs,
                     double alpha) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_loss: no pairs");
  double total = 0.0;
  ad::Tape<float> tape;
  for (const auto& p : pairs) {
    total += pair_loss(tape, model, p, alpha)->item();
    tape.clear();
  }
  return total / static_cast<double>(pairs.size());
}

TrainResult train_restorer(const std::vector<TrainingPair>& train,
                           const std::vector<TrainingPair>& validation, const TrainConfig& cfg,
                           const UNetSpec& spec, const TrainProgress& progress) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("train_restorer: empty training set");
  check_pairs(train, "train_restorer");
  check_pairs(validation, "train_restorer");
  if (spec.in_channels != 1) throw std::invalid_argument("restorer U-Net needs one input channel");

  TrainResult result;
  result.model = build_unet<float>(spec, derive_seed(cfg.seed, "unet"));
  auto& params = result.model.params;
  auto adam = ad::AdamState<float>::zeros_like(params);
  ad::ParamSet<float> best = params.clone();

  std::vector<std::size_t> order(train.size());
  ad::Tape<float> tape;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<long long>(i) - 1))]);
    }

    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const float share = 1.0f / static_cast<float>(stop - start);
      params.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const auto loss = pair_loss(tape, result.model, train[order[k]], cfg.alpha);
        const double v = loss->item();
        if (!std::isfinite(v)) {
          tape.clear();
          throw recon::DivergenceError("training: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", batch " +
                                       std::to_string(batches));
        }
        batch_loss += v;
        tape.backward(loss, std::vector<float>{share});
      }
      ad::adam_step(params, adam, cfg.lr);
      epoch_loss += batch_loss / static_cast<double>(stop - start);
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / batches;
    entry.val_loss = validation.empty() ? entry.train_loss
                                        : evaluate_loss(result.model, validation, cfg.alpha);
    result.log.push_back(entry);
    if (result.best_epoch < 0 || entry.val_loss < result.best_val_loss) {
      result.best_epoch = epoch;
      result.best_val_loss = entry.val_loss;
      best = params.clone();
    }
    if (progress) progress(entry);
  }
  params.assign(best);
  return result;
}

TrainResult train_restorer(const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
                           const UNetSpec& spec, const TrainProgress& progress) {
  cfg.validate();
  const std::size_t n = pairs.size();
  std::size_t n_val = static_cast<std::size_t>(std::lround(cfg.validation_fraction * n));
  if (cfg.validation_fraction > 0.0 && n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  if (n < 2) n_val = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, "split"));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<long long>(i) - 1))]);
  }
  std::vector<TrainingPair> train, val;
  for (std::size_t i = 0; i < n; ++i) (i < n_val ? val : train).push_back(pairs[order[i]]);
  return train_restorer(train, val, cfg, spec, progress);
}

proj::Image2D restore(const UNet<float>& model, const proj::Image2D& x_deg) {
  const Padding pad = padding_for(x_deg.height, x_deg.width, model.spec.multiple());
  ad::Tape<float> tape;
  auto out = model.forward(tape, pad_reflect<float>(x_deg, pad));
  tape.clear();
  proj::Image2D x(x_deg.height, x_deg.width);
  for (int i = 0; i < x.height; ++i) {
    for (int j = 0; j < x.width; ++j) {
      x.at(i, j) = out->value[static_cast<std::size_t>(i + pad.top) * pad.width + j + pad.left];
    }
  }
  return x;
}

}  // namespace etomo::deep
