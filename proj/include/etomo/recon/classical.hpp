#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "etomo/projector/projector.hpp"

namespace etomo::recon {

/// A reconstruction produced a NaN or infinity; the message carries the
/// iteration index.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SirtConfig {
  int iterations = 200;
  bool nonnegative = true;
  double relaxation = 1.0;

  void validate() const;
};

/// x <- clamp>=0(x + w C P^T R (y - P x)), x0 = 0, with R and C the inverse
/// row and column sums of P (zero where a sum vanishes). If `residual` is
/// given it receives ||P x_k - y||_R^2 before each update.
proj::Image2D sirt_reconstruct(const proj::Sinogram& y, const proj::TiltGeometry& g,
                               const SirtConfig& cfg, std::vector<double>* residual = nullptr);

struct CsTvConfig {
  double lambda = 0.0;
  int iterations = 500;
  /// Optional box bound x <= upper_bound (0 disables it). Only needed for a
  /// finite primal-dual gap.
  double upper_bound = 0.0;
  /// Power-iteration steps for ||P||.
  int norm_iterations = 50;

  void validate() const;
};

struct CsTvTrace {
  std::vector<double> primal;  // 0.5 ||P x - y||^2 + lambda TV(x)
  std::vector<double> gap;     // filled only when upper_bound > 0
};

/// Chambolle-Pock for 0.5 ||P x - y||^2 + lambda TV(x) subject to x >= 0,
/// with isotropic TV (forward differences) and sigma = tau = 0.99 / ||K||,
/// K = [P; grad]. Returns the last primal iterate.
proj::Image2D cstv_reconstruct(const proj::Sinogram& y, const proj::TiltGeometry& g,
                               const CsTvConfig& cfg, CsTvTrace* trace = nullptr);

/// Isotropic TV without smoothing, forward differences.
double total_variation(const proj::Image2D& x);

/// lo * 10^(k / per_decade) for k = 0 .. decades * per_decade.
std::vector<double> lambda_grid(double lo, int decades = 2, int per_decade = 5);

struct GridSearchResult {
  double best = 0.0;
  double best_score = 0.0;
  std::vector<double> values;
  std::vector<double> scores;
};

/// Evaluates `score` (higher is better) at every grid value; ties keep the
/// smallest value.
GridSearchResult grid_search(const std::vector<double>& grid,
                             const std::function<double(double)>& score);

}  // namespace etomo::recon
