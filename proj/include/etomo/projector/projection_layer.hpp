#pragma once

#include "etomo/autodiff/ops.hpp"
#include "etomo/projector/projector.hpp"

namespace etomo::proj {

/// Differentiable projection layer: a [1,H,W] image tensor maps to a
/// [1, n_angles, n_detector] sinogram tensor. The backward rule applies the
/// matched back projector. Arithmetic inside the projector is 64-bit.
template <typename T>
ad::TensorPtr<T> project(ad::Tape<T>& tape, const ad::TensorPtr<T>& x, const TiltGeometry& g);

}  // namespace etomo::proj
