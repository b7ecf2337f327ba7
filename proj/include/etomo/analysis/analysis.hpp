#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "etomo/core/grid.hpp"
#include "etomo/projector/projector.hpp"

namespace etomo::analysis {

/// Returned by psnr when the images are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(L^2 / MSE) with L = max(ref) - min(ref). Throws on size mismatch
/// or a constant reference.
double psnr(const proj::Image2D& x, const proj::Image2D& ref);

/// Mean SSIM (11x11 Gaussian window, sigma 1.5) with L taken from the
/// reference's range. Volumes are scored as the mean over slices.
double ssim_eval(const proj::Image2D& x, const proj::Image2D& ref);
double ssim_eval(const Volume3D& x, const Volume3D& ref);

struct OtsuResult {
  double threshold = 0.0;
  Mask mask;  // value > threshold
};

/// 256-bin histogram over [min, max]; candidate thresholds are the upper bin
/// edges; ties go to the lowest. Throws std::invalid_argument on constant
/// input.
OtsuResult otsu_threshold(const std::vector<double>& values, const std::vector<int>& dims);
OtsuResult otsu_threshold(const proj::Image2D& x);
OtsuResult otsu_threshold(const Volume3D& x);

/// 4-connectivity in 2D, 6 in 3D; labels 1..K in scan order.
LabelMap label_components(const Mask& mask);

/// Euclidean distance from every foreground element to the nearest
/// background element; the outside of the grid counts as background.
std::vector<double> distance_transform(const Mask& mask);

struct WatershedParams {
  double h = 1.0;               // h-maxima depth, px
  double min_separation = 3.0;  // markers closer than this merge, px
};

/// Marker-controlled flooding of the negated distance transform. Every
/// foreground element receives a label (no watershed lines), so the labels
/// partition the foreground. Labels are renumbered 1..K in scan order.
LabelMap watershed_separate(const Mask& mask, const WatershedParams& params = {});

/// Pixel-level 2TP / (2TP + FP + FN); 1 when both masks are empty.
double f1_score(const Mask& pred, const Mask& ref);

struct Particle {
  std::int64_t label = 0;
  double size = 0.0;      // area (2D) or volume (3D)
  double boundary = 0.0;  // perimeter (2D) or surface area (3D)
  double eq_diameter = 0.0;
  double shape = 0.0;     // circularity (2D) or sphericity (3D); may exceed 1 slightly
  std::vector<double> centroid;  // (row, col) or (slice, row, col)
};

struct ParticleStats {
  int dims = 2;
  std::vector<Particle> particles;

  std::size_t count() const { return particles.size(); }
  double mean_size() const;
  double mean_diameter() const;
  double mean_shape() const;
};

/// 2D: perimeter from the four-direction Crofton intercept estimator,
/// circularity 4 pi A / P^2. 3D: surface area is 2/3 of the exposed voxel
/// face count, sphericity pi^(1/3) (6V)^(2/3) / S. Particles touching the
/// border are included.
ParticleStats particle_stats(const LabelMap& labels);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
};

/// Fixed-width bins over [lo, hi]; values equal to hi land in the last bin,
/// values outside are clamped to the end bins.
Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins = 20);

/// CSV (header: group,quantity,bin,lo,hi,count) with 20-bin shape histograms
/// over [0, 1] and 20-bin equivalent-diameter histograms over the ensemble's
/// diameter range. Throws on an empty ensemble.
std::string histogram_report(const std::vector<std::pair<std::string, ParticleStats>>& ensemble);

/// Per-particle table (header: label,size,boundary,eq_diameter,shape,centroid...).
std::string particle_table(const ParticleStats& stats);

}  // namespace etomo::analysis
