#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "etomo/deep/unet.hpp"

namespace etomo::deep {

struct DipConfig {
  int iterations = 1000;
  double lambda_tv = 0.0;
  int z_channels = 16;
  double z_scale = 0.1;
  std::uint64_t seed = 0;
  double lr = 3e-4;

  /// iterations may be 0, which returns the untrained network output.
  void validate() const;
};

struct DipResult {
  proj::Image2D image;             // output with the lowest recorded loss
  std::vector<double> loss_trace;  // loss of F_theta_k(z) for k = 0 .. iterations-1
  int best_iteration = -1;         // -1 when no iteration ran
  double best_loss = 0.0;          // == loss_trace[best_iteration]
};

/// Called after every iteration with (iteration, loss).
using DipProgress = std::function<void(int, double)>;

/// Fixed network input z: [z_channels, H, W], i.i.d. uniform on [0, z_scale),
/// drawn from a seed derived from cfg.seed.
template <typename T>
ad::TensorPtr<T> make_dip_input(const DipConfig& cfg, int height, int width);

/// mse(P crop(F(z)), y) + lambda * tv_penalty(crop(F(z))). The cropped image
/// is returned through `image` when given.
template <typename T>
ad::TensorPtr<T> dip_objective(ad::Tape<T>& tape, const UNet<T>& net, const ad::TensorPtr<T>& z,
                               const Padding& pad, const proj::Sinogram& y,
                               const proj::TiltGeometry& g, double lambda,
                               ad::TensorPtr<T>* image = nullptr);

/// Adam on the network parameters, keeping the output with minimal loss.
/// The network input width is cfg.z_channels regardless of spec.in_channels.
/// Throws recon::DivergenceError on a non-finite loss, naming the iteration.
DipResult dip_reconstruct(const proj::Sinogram& y, const proj::TiltGeometry& g,
                          const DipConfig& cfg, const UNetSpec& spec,
                          const DipProgress& progress = {});

}  // namespace etomo::deep
