#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace etomo::proj {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parallel-beam tilt series on a unit-pitch grid.
///
/// The rotation axis passes through the image centre ((W-1)/2, (H-1)/2) and
/// the detector is centred on it. Detector bin k sits at offset
/// k - (n_detector-1)/2. At 0 degrees the rays run along the image rows'
/// normal, so each projection is a sum over rows (one value per column).
struct TiltGeometry {
  std::vector<double> angles_deg;
  int n_detector = 0;
  int height = 0;
  int width = 0;

  int n_angles() const { return static_cast<int>(angles_deg.size()); }
  /// Throws GeometryError unless angles are strictly increasing within
  /// [-90, 90] and all extents are positive.
  void validate() const;
  bool operator==(const TiltGeometry&) const = default;
};

/// Angles start, start+step, ... up to stop (inclusive when reached exactly).
/// `n_detector` <= 0 selects the image width.
TiltGeometry make_geometry(double start_deg, double step_deg, double stop_deg, int height,
                           int width, int n_detector = 0);

/// Named tilt range in the start:step:stop notation.
struct Scenario {
  std::string name;
  double start_deg = 0.0;
  double step_deg = 1.0;
  double stop_deg = 0.0;

  TiltGeometry geometry(int height, int width, int n_detector = 0) const {
    return make_geometry(start_deg, step_deg, stop_deg, height, width, n_detector);
  }
  bool operator==(const Scenario&) const = default;
};

struct Image2D {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image2D() = default;
  Image2D(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}
  Image2D(int h, int w, std::vector<double> values);

  double& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const { return data.size(); }
};

/// Projections indexed (angle, detector bin), row-major.
struct Sinogram {
  TiltGeometry geometry;
  std::vector<double> data;

  Sinogram() = default;
  explicit Sinogram(TiltGeometry g)
      : geometry(std::move(g)),
        data(static_cast<std::size_t>(geometry.n_angles()) * geometry.n_detector, 0.0) {}

  double& at(int angle, int bin) {
    return data[static_cast<std::size_t>(angle) * geometry.n_detector + bin];
  }
  double at(int angle, int bin) const {
    return data[static_cast<std::size_t>(angle) * geometry.n_detector + bin];
  }
};

/// Line integrals along parallel rays (Joseph interpolation: linear
/// interpolation across the axis the ray crosses fastest, one sample per
/// row or column, weighted by the path length per sample).
Sinogram forward_project(const Image2D& x, const TiltGeometry& g);

/// Exact transpose of forward_project (unfiltered).
Image2D back_project(const Sinogram& y, const TiltGeometry& g);

/// Raw-buffer forms used by the reconstructors and the autodiff projection
/// layer; `image` is H*W, `sino` is n_angles*n_detector. back_project_into
/// accumulates into `image`.
void forward_project_into(const double* image, const TiltGeometry& g, double* sino);
void back_project_into(const double* sino, const TiltGeometry& g, double* image);

/// Power-iteration estimate of the spectral norm of P.
double operator_norm(const TiltGeometry& g, int iterations = 50, std::uint64_t seed = 0);

/// Adds i.i.d. N(0, sigma^2) noise; deterministic per seed.
Sinogram add_noise(const Sinogram& y, double sigma, std::uint64_t seed);

}  // namespace etomo::proj
