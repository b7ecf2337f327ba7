#pragma once

#include "etomo/autodiff/tape.hpp"
#include "etomo/autodiff/tensor.hpp"

// Differentiable operations used by the U-Net, the training losses and the
// DIP objective. Every function evaluates eagerly; if any operand requires a
// gradient, the result does too and a backward rule is appended to `tape`.
//
// Images are [C, H, W] tensors. Losses return a [1] tensor.

namespace etomo::ad {

/// Same-size 2D cross-correlation with zero padding, stride 1.
/// input [Cin,H,W], kernel [Cout,Cin,k,k] with k odd (3 in the body of the
/// U-Net, 1 in its head), bias [Cout]. Output [Cout,H,W].
template <typename T>
TensorPtr<T> conv2d(Tape<T>& tape, const TensorPtr<T>& input, const TensorPtr<T>& kernel,
                    const TensorPtr<T>& bias);

/// max(0, x). The subgradient at exactly 0 is 0.
template <typename T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& input);

/// 2x2 non-overlapping max pooling; H and W must be even. The gradient goes to
/// the first maximum of each block in row-major order.
template <typename T>
TensorPtr<T> maxpool2(Tape<T>& tape, const TensorPtr<T>& input);

/// 2x nearest-neighbour upsampling.
template <typename T>
TensorPtr<T> upsample2(Tape<T>& tape, const TensorPtr<T>& input);

/// Channel stacking of [C1,H,W] and [C2,H,W].
template <typename T>
TensorPtr<T> concat_channels(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

/// Spatial window [top, top+height) x [left, left+width) of every channel.
template <typename T>
TensorPtr<T> crop(Tape<T>& tape, const TensorPtr<T>& input, int top, int left, int height,
                  int width);

/// Elementwise a + b (equal shapes).
template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

/// factor * a + offset, elementwise.
template <typename T>
TensorPtr<T> affine(Tape<T>& tape, const TensorPtr<T>& a, T factor, T offset = T(0));

/// Sum of all elements, as a [1] tensor.
template <typename T>
TensorPtr<T> sum(Tape<T>& tape, const TensorPtr<T>& a);

/// mean |a - b|.
template <typename T>
TensorPtr<T> l1_loss(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

/// mean (a - b)^2.
template <typename T>
TensorPtr<T> mse_loss(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// with C1 = (0.01 L)^2 and C2 = (0.03 L)^2 for L = data_range. Both operands
/// are [1,H,W] with H, W >= 11; differentiable with respect to both.
template <typename T>
TensorPtr<T> ssim(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b, T data_range);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kTvEpsilon = 1e-8;

/// Smoothed isotropic total variation of a [1,H,W] image:
///   sum_ij sqrt(dh^2 + dv^2 + eps^2) - eps
/// with forward differences that vanish on the last row and column.
template <typename T>
TensorPtr<T> tv_penalty(Tape<T>& tape, const TensorPtr<T>& x, T eps = T(kTvEpsilon));

}  // namespace etomo::ad
