#include "etomo/recon/classical.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace etomo::recon {
namespace {

void check_input(const proj::Sinogram& y, const proj::TiltGeometry& g) {
  g.validate();
  if (y.geometry.n_angles() != g.n_angles() || y.geometry.n_detector != g.n_detector ||
      y.data.size() != static_cast<std::size_t>(g.n_angles()) * g.n_detector) {
    throw proj::GeometryError("sinogram does not match the reconstruction geometry");
  }
}

void check_finite(const std::vector<double>& v, const char* method, int iteration) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw DivergenceError(std::string(method) + ": non-finite value at iteration " +
                            std::to_string(iteration));
    }
  }
}

// Forward-difference gradient; the difference leaving the image is zero.
void gradient(const std::vector<double>& x, int h, int w, std::vector<double>& gx,
              std::vector<double>& gy) {
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * w + j;
      gx[k] = j + 1 < w ? x[k + 1] - x[k] : 0.0;
      gy[k] = i + 1 < h ? x[k + w] - x[k] : 0.0;
    }
  }
}

// scale * adjoint of `gradient`, accumulated into out.
void gradient_adjoint_add(const std::vector<double>& gx, const std::vector<double>& gy, int h,
                          int w, double scale, std::vector<double>& out) {
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * w + j;
      double v = 0.0;
      if (j + 1 < w) v -= gx[k];
      if (j > 0) v += gx[k - 1];
      if (i + 1 < h) v -= gy[k];
      if (i > 0) v += gy[k - w];
      out[k] += scale * v;
    }
  }
}

double tv_of(const std::vector<double>& x, int h, int w) {
  std::vector<double> gx(x.size()), gy(x.size());
  gradient(x, h, w, gx, gy);
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += std::sqrt(gx[k] * gx[k] + gy[k] * gy[k]);
  return s;
}

}  // namespace

void SirtConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("SIRT iterations must be at least 1");
  if (!(relaxation > 0.0 && relaxation < 2.0)) {
    throw std::invalid_argument("SIRT relaxation must lie in (0, 2)");
  }
}

void CsTvConfig::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw std::invalid_argument("CS-TV lambda must be finite and non-negative");
  }
  if (iterations < 1) throw std::invalid_argument("CS-TV iterations must be at least 1");
  if (!(upper_bound >= 0.0)) throw std::invalid_argument("CS-TV upper bound must be >= 0");
  if (norm_iterations < 1) throw std::invalid_argument("norm iterations must be at least 1");
}

proj::Image2D sirt_reconstruct(const proj::Sinogram& y, const proj::TiltGeometry& g,
                               const SirtConfig& cfg, std::vector<double>* residual) {
  cfg.validate();
  check_input(y, g);
  const std::size_t nx = static_cast<std::size_t>(g.height) * g.width;
  const std::size_t ny = y.data.size();

  std::vector<double> rinv(ny), cinv(nx, 0.0);
  {
    const std::vector<double> ones_x(nx, 1.0), ones_y(ny, 1.0);
    proj::forward_project_into(ones_x.data(), g, rinv.data());
    proj::back_project_into(ones_y.data(), g, cinv.data());
    for (double& v : rinv) v = v > 0.0 ? 1.0 / v : 0.0;
    for (double& v : cinv) v = v > 0.0 ? 1.0 / v : 0.0;
  }

  proj::Image2D x(g.height, g.width);
  std::vector<double> r(ny), upd(nx);
  if (residual) residual->clear();
  for (int it = 0; it < cfg.iterations; ++it) {
    proj::forward_project_into(x.data.data(), g, r.data());
    double res = 0.0;
    for (std::size_t i = 0; i < ny; ++i) {
      const double d = y.data[i] - r[i];
      res += rinv[i] * d * d;
      r[i] = rinv[i] * d;
    }
    if (residual) residual->push_back(res);
    std::fill(upd.begin(), upd.end(), 0.0);
    proj::back_project_into(r.data(), g, upd.data());
    for (std::size_t k = 0; k < nx; ++k) {
      double v = x.data[k] + cfg.relaxation * cinv[k] * upd[k];
      if (cfg.nonnegative && v < 0.0) v = 0.0;
      x.data[k] = v;
    }
    check_finite(x.data, "SIRT", it);
  }
  return x;
}

proj::Image2D cstv_reconstruct(const proj::Sinogram& y, const proj::TiltGeometry& g,
                               const CsTvConfig& cfg, CsTvTrace* trace) {
  cfg.validate();
  check_input(y, g);
  const int h = g.height;
  const int w = g.width;
  const std::size_t nx = static_cast<std::size_t>(h) * w;
  const std::size_t ny = y.data.size();

  // ||grad||^2 <= 8 on this stencil, so the bound below never underestimates
  // ||K|| by more than the power-iteration error on ||P||.
  const double norm_p = proj::operator_norm(g, cfg.norm_iterations);
  const double c = 1.0;
  const double norm_k = std::sqrt(norm_p * norm_p + 8.0);
  const double sigma = 0.99 / norm_k;
  const double tau = 0.99 / norm_k;
  const double lambda = cfg.lambda;
  const double bound = lambda / c;
  const double upper = cfg.upper_bound > 0.0 ? cfg.upper_bound : INFINITY;

  std::vector<double> x(nx, 0.0), xbar(nx, 0.0), xold(nx);
  std::vector<double> p(ny, 0.0), qx(nx, 0.0), qy(nx, 0.0);
  std::vector<double> px(ny), gx(nx), gy(nx), kt(nx);
  if (trace) {
    trace->primal.clear();
    trace->gap.clear();
  }

  for (int it = 0; it < cfg.iterations; ++it) {
    // Dual ascent on the data term: prox of sigma F1* with F1(u) = 0.5||u - y||^2.
    proj::forward_project_into(xbar.data(), g, px.data());
    for (std::size_t i = 0; i < ny; ++i) p[i] = (p[i] + sigma * (px[i] - y.data[i])) / (1.0 + sigma);
    // Dual ascent on the TV term: pointwise projection onto |q| <= lambda / c.
    gradient(xbar, h, w, gx, gy);
    for (std::size_t k = 0; k < nx; ++k) {
      const double ax = qx[k] + sigma * c * gx[k];
      const double ay = qy[k] + sigma * c * gy[k];
      const double mag = std::sqrt(ax * ax + ay * ay);
      const double s = mag > bound ? (bound > 0.0 ? bound / mag : 0.0) : 1.0;
      qx[k] = ax * s;
      qy[k] = ay * s;
    }
    // Primal descent with projection onto the feasible box.
    std::fill(kt.begin(), kt.end(), 0.0);
    proj::back_project_into(p.data(), g, kt.data());
    gradient_adjoint_add(qx, qy, h, w, c, kt);
    xold = x;
    for (std::size_t k = 0; k < nx; ++k) {
      x[k] = std::clamp(x[k] - tau * kt[k], 0.0, upper);
      xbar[k] = 2.0 * x[k] - xold[k];
    }
    check_finite(x, "CS-TV", it);

    if (trace) {
      proj::forward_project_into(x.data(), g, px.data());
      double data = 0.0;
      for (std::size_t i = 0; i < ny; ++i) data += 0.5 * (px[i] - y.data[i]) * (px[i] - y.data[i]);
      const double primal = data + lambda * tv_of(x, h, w);
      trace->primal.push_back(primal);
      if (cfg.upper_bound > 0.0) {
        // Dual objective at the current (p, q); q is feasible by construction.
        std::fill(kt.begin(), kt.end(), 0.0);
        proj::back_project_into(p.data(), g, kt.data());
        gradient_adjoint_add(qx, qy, h, w, c, kt);
        double dual_conj = 0.0;
        for (std::size_t i = 0; i < ny; ++i) dual_conj += 0.5 * p[i] * p[i] + p[i] * y.data[i];
        double box = 0.0;
        for (std::size_t k = 0; k < nx; ++k) box += std::max(-kt[k], 0.0);
        trace->gap.push_back(primal + dual_conj + cfg.upper_bound * box);
      }
    }
  }
  return proj::Image2D(h, w, std::move(x));
}

double total_variation(const proj::Image2D& x) { return tv_of(x.data, x.height, x.width); }

std::vector<double> lambda_grid(double lo, int decades, int per_decade) {
  if (!(lo > 0.0) || decades < 0 || per_decade < 1) {
    throw std::invalid_argument("lambda grid needs lo > 0, decades >= 0, per_decade >= 1");
  }
  std::vector<double> grid;
  for (int k = 0; k <= decades * per_decade; ++k) {
    grid.push_back(lo * std::pow(10.0, static_cast<double>(k) / per_decade));
  }
  return grid;
}

GridSearchResult grid_search(const std::vector<double>& grid,
                             const std::function<double(double)>& score) {
  if (grid.empty()) throw std::invalid_argument("grid search over an empty grid");
  GridSearchResult r;
  r.values = grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double s = score(grid[i]);
    r.scores.push_back(s);
    if (i == 0 || s > r.best_score) {
      r.best_score = s;
      r.best = grid[i];
    }
  }
  return r;
}

}  // namespace etomo::recon
