#pragma once

// Brute-force reference implementations used only by the test suites. None
// of this code calls into the modules it is used to check.

#include <cstdint>
#include <functional>
#include <vector>

#include "etomo/projector/projector.hpp"

namespace etomo::oracle {

/// Explicit projection matrix, rows = rays (angle-major), columns = pixels.
struct DenseOperator {
  int rows = 0;
  int cols = 0;
  std::vector<double> m;  // row-major

  double at(int r, int c) const { return m[static_cast<std::size_t>(r) * cols + c]; }
  std::vector<double> apply(const std::vector<double>& x) const;
  std::vector<double> apply_transpose(const std::vector<double>& y) const;
};

/// Joseph weights evaluated pixel by pixel from the ray equation.
/// Guarded to tiny geometries (<= 32x32 image, <= 8 angles).
DenseOperator build_dense(const proj::TiltGeometry& g);

/// `iterations` of the simultaneous scheme written as dense matrix algebra:
/// x <- max(0, x + omega * C A^T R (y - A x)), x0 = 0.
std::vector<double> dense_sirt(const DenseOperator& a, const std::vector<double>& y,
                               int iterations, double omega, bool nonnegative);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h on the listed
/// coordinates (all coordinates when `coords` is empty).
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x, double h,
                                const std::vector<std::size_t>& coords = {});

double l1_mean(const std::vector<double>& a, const std::vector<double>& b);
double mse_mean(const std::vector<double>& a, const std::vector<double>& b);
/// Per-pixel smoothed isotropic TV with forward differences.
double tv_bruteforce(const std::vector<double>& x, int h, int w, double eps);

/// Exhaustive between-class variance scan over the 255 split points of a
/// 256-bin histogram on [min, max]. Returns the threshold (upper edge of the
/// lower class).
double otsu_bruteforce(const std::vector<double>& x);

/// Scalar Adam reference trace: parameter values after each of `steps` updates
/// with gradient g(theta) = grad_fn(theta).
std::vector<double> adam_scalar_trace(double theta0, const std::function<double(double)>& grad_fn,
                                      int steps, double lr, double beta1 = 0.9,
                                      double beta2 = 0.999, double eps = 1e-8);

/// Closed-form trainable-parameter count of the U-Net: per 3x3 conv
/// Cout*Cin*9 + Cout over the encoder and decoder, plus the two 1x1 head
/// layers (C0 -> C0, C0 -> 1).
std::size_t unet_param_count(const std::vector<int>& channels, int in_channels);

/// Relative error |a - b| / max(|a|, |b|, floor).
double rel_err(double a, double b, double floor = 1e-12);

}  // namespace etomo::oracle
