#pragma once

#include <cstdint>
#include <vector>

#include "etomo/autodiff/adam.hpp"
#include "etomo/autodiff/ops.hpp"
#include "etomo/projector/projector.hpp"

namespace etomo::deep {

/// Encoder/decoder widths, one entry per block. Each block is two 3x3
/// conv + ReLU layers; blocks are joined by 2x2 max pooling on the way down
/// and by nearest upsampling plus a skip concatenation on the way up. The
/// head is two linear 1x1 convolutions, C0 -> C0 -> 1.
struct UNetSpec {
  std::vector<int> channels{16, 32, 64, 128};
  int in_channels = 1;

  int depth() const { return static_cast<int>(channels.size()); }
  /// Inputs must have H and W divisible by this (2^depth).
  int multiple() const { return 1 << depth(); }
  void validate() const;
  bool operator==(const UNetSpec&) const = default;
};

template <typename T>
struct UNet {
  UNetSpec spec;
  ad::ParamSet<T> params;

  /// [in_channels, H, W] -> [1, H, W]. Throws ad::ShapeError when H or W is
  /// not a multiple of spec.multiple().
  ad::TensorPtr<T> forward(ad::Tape<T>& tape, const ad::TensorPtr<T>& x) const;
};

/// He-uniform kernels (bound sqrt(6 / fan_in)), zero biases. Bit-identical
/// for equal (spec, seed).
template <typename T>
UNet<T> build_unet(const UNetSpec& spec, std::uint64_t seed);

/// alpha * (1 - SSIM(x_out, x_ref)) + (1 - alpha) * mean |x_ref - x_out|,
/// for [1,H,W] operands. SSIM uses `data_range` as L.
template <typename T>
ad::TensorPtr<T> mixed_loss(ad::Tape<T>& tape, const ad::TensorPtr<T>& x_ref,
                            const ad::TensorPtr<T>& x_out, double alpha, double data_range);

/// Reflect padding (edge sample not repeated) up to the next multiple of
/// `multiple` in each direction, split as evenly as possible with the extra
/// row/column at the bottom/right.
struct Padding {
  int top = 0;
  int left = 0;
  int height = 0;  // padded size
  int width = 0;
};

Padding padding_for(int height, int width, int multiple);

template <typename T>
ad::TensorPtr<T> pad_reflect(const proj::Image2D& x, const Padding& p);

/// max - min of the image, or 1 when the image is constant.
double data_range(const proj::Image2D& x);

}  // namespace etomo::deep
