#include "etomo/projector/projector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "etomo/core/random.hpp"

namespace etomo::proj {
namespace {

// Visits every (ray, pixel, weight) triple of the projection matrix. The
// forward and back projectors share this walk, which makes them exact
// transposes of each other.
template <typename Visit>
void for_each_weight(const TiltGeometry& g, Visit&& visit) {
  const int H = g.height;
  const int W = g.width;
  const int nd = g.n_detector;
  const double cx = 0.5 * (W - 1);
  const double cy = 0.5 * (H - 1);
  const double u0 = -0.5 * (nd - 1);
  for (int a = 0; a < g.n_angles(); ++a) {
    const double theta = g.angles_deg[a] * std::numbers::pi / 180.0;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const std::size_t ray0 = static_cast<std::size_t>(a) * nd;
    if (std::abs(c) >= std::abs(s)) {
      // One sample per image row: x = (u - y s) / c.
      const double w = 1.0 / std::abs(c);
      const double inv = 1.0 / c;
      for (int r = 0; r < H; ++r) {
        const double y = r - cy;
        for (int k = 0; k < nd; ++k) {
          const double fx = (u0 + k - y * s) * inv + cx;
          const double fl = std::floor(fx);
          const int i0 = static_cast<int>(fl);
          const double f = fx - fl;
          const std::size_t row = static_cast<std::size_t>(r) * W;
          if (i0 >= 0 && i0 < W) visit(ray0 + k, row + i0, w * (1.0 - f));
          if (i0 + 1 >= 0 && i0 + 1 < W && f > 0.0) visit(ray0 + k, row + i0 + 1, w * f);
        }
      }
    } else {
      // One sample per image column: y = (u - x c) / s.
      const double w = 1.0 / std::abs(s);
      const double inv = 1.0 / s;
      for (int col = 0; col < W; ++col) {
        const double x = col - cx;
        for (int k = 0; k < nd; ++k) {
          const double fy = (u0 + k - x * c) * inv + cy;
          const double fl = std::floor(fy);
          const int j0 = static_cast<int>(fl);
          const double f = fy - fl;
          if (j0 >= 0 && j0 < H) {
            visit(ray0 + k, static_cast<std::size_t>(j0) * W + col, w * (1.0 - f));
          }
          if (j0 + 1 >= 0 && j0 + 1 < H && f > 0.0) {
            visit(ray0 + k, static_cast<std::size_t>(j0 + 1) * W + col, w * f);
          }
        }
      }
    }
  }
}

void check_image(const Image2D& x, const TiltGeometry& g) {
  if (x.height != g.height || x.width != g.width) {
    throw GeometryError("image is " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                        " but geometry expects " + std::to_string(g.height) + "x" +
                        std::to_string(g.width));
  }
  if (x.data.size() != static_cast<std::size_t>(x.height) * x.width) {
    throw GeometryError("image buffer size does not match its extents");
  }
}

void check_sinogram(const Sinogram& y, const TiltGeometry& g) {
  if (y.geometry.n_angles() != g.n_angles() || y.geometry.n_detector != g.n_detector) {
    throw GeometryError("sinogram is " + std::to_string(y.geometry.n_angles()) + "x" +
                        std::to_string(y.geometry.n_detector) + " but geometry expects " +
                        std::to_string(g.n_angles()) + "x" + std::to_string(g.n_detector));
  }
  if (y.data.size() != static_cast<std::size_t>(g.n_angles()) * g.n_detector) {
    throw GeometryError("sinogram buffer size does not match its geometry");
  }
}

}  // namespace

void TiltGeometry::validate() const {
  if (height <= 0 || width <= 0) throw GeometryError("image extents must be positive");
  if (n_detector <= 0) throw GeometryError("detector bin count must be positive");
  if (angles_deg.empty()) throw GeometryError("geometry has no angles");
  for (std::size_t i = 0; i < angles_deg.size(); ++i) {
    const double a = angles_deg[i];
    if (!std::isfinite(a) || a < -90.0 || a > 90.0) {
      throw GeometryError("angle " + std::to_string(a) + " outside [-90, 90]");
    }
    if (i > 0 && !(a > angles_deg[i - 1])) {
      throw GeometryError("angles must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
}

TiltGeometry make_geometry(double start_deg, double step_deg, double stop_deg, int height,
                           int width, int n_detector) {
  if (!(step_deg > 0.0)) throw GeometryError("angular step must be positive");
  if (!(start_deg <= stop_deg)) throw GeometryError("empty angular range (start > stop)");
  const double span = (stop_deg - start_deg) / step_deg;
  const auto count = static_cast<long>(std::floor(span + 1e-9)) + 1;
  TiltGeometry g;
  g.height = height;
  g.width = width;
  g.n_detector = n_detector > 0 ? n_detector : width;
  g.angles_deg.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    g.angles_deg.push_back(start_deg + step_deg * static_cast<double>(i));
  }
  g.validate();
  return g;
}

Image2D::Image2D(int h, int w, std::vector<double> values)
    : height(h), width(w), data(std::move(values)) {
  if (data.size() != static_cast<std::size_t>(h) * w) {
    throw GeometryError("image " + std::to_string(h) + "x" + std::to_string(w) + " given " +
                        std::to_string(data.size()) + " values");
  }
}

void forward_project_into(const double* image, const TiltGeometry& g, double* sino) {
  const std::size_t n = static_cast<std::size_t>(g.n_angles()) * g.n_detector;
  for (std::size_t i = 0; i < n; ++i) sino[i] = 0.0;
  for_each_weight(g, [&](std::size_t ray, std::size_t pix, double w) {
    sino[ray] += w * image[pix];
  });
}

void back_project_into(const double* sino, const TiltGeometry& g, double* image) {
  for_each_weight(g, [&](std::size_t ray, std::size_t pix, double w) {
    image[pix] += w * sino[ray];
  });
}

Sinogram forward_project(const Image2D& x, const TiltGeometry& g) {
  g.validate();
  check_image(x, g);
  Sinogram y(g);
  forward_project_into(x.data.data(), g, y.data.data());
  return y;
}

Image2D back_project(const Sinogram& y, const TiltGeometry& g) {
  g.validate();
  check_sinogram(y, g);
  Image2D x(g.height, g.width);
  back_project_into(y.data.data(), g, x.data.data());
  return x;
}

double operator_norm(const TiltGeometry& g, int iterations, std::uint64_t seed) {
  g.validate();
  Rng rng(seed);
  const std::size_t n = static_cast<std::size_t>(g.height) * g.width;
  std::vector<double> x(n), sino(static_cast<std::size_t>(g.n_angles()) * g.n_detector);
  for (auto& v : x) v = rng.uniform() + 0.5;
  double lambda = 0.0;
  auto normalize = [&x]() {
    double s = 0.0;
    for (double v : x) s += v * v;
    s = std::sqrt(s);
    if (s > 0.0) {
      for (double& v : x) v /= s;
    }
    return s;
  };
  normalize();
  for (int it = 0; it < iterations; ++it) {
    forward_project_into(x.data(), g, sino.data());
    std::fill(x.begin(), x.end(), 0.0);
    back_project_into(sino.data(), g, x.data());
    lambda = normalize();
    if (lambda == 0.0) break;
  }
  return std::sqrt(lambda);
}

Sinogram add_noise(const Sinogram& y, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
  Sinogram out = y;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (double& v : out.data) v += sigma * rng.normal();
  return out;
}

}  // namespace etomo::proj
