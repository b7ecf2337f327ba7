#include "etomo/pipeline/evaluate.hpp"

#include <cmath>
#include <cstdio>

namespace etomo::pipeline {

analysis::ParticleStats morphometry(const proj::Image2D& x) {
  const auto otsu = analysis::otsu_threshold(x);
  return analysis::particle_stats(analysis::watershed_separate(otsu.mask));
}

Metrics evaluate(const proj::Image2D& recon, const proj::Image2D& reference) {
  Metrics m;
  m.ssim = analysis::ssim_eval(recon, reference);
  m.psnr = analysis::psnr(recon, reference);
  const auto a = analysis::otsu_threshold(recon);
  const auto b = analysis::otsu_threshold(reference);
  m.f1 = analysis::f1_score(a.mask, b.mask);
  m.particles = analysis::particle_stats(analysis::watershed_separate(a.mask));
  return m;
}

io::Json metrics_to_json(const Metrics& m) {
  io::Json parts = io::Json::array();
  for (const auto& p : m.particles.particles) {
    parts.push_back({p.size, p.boundary, p.eq_diameter, p.shape});
  }
  // PSNR is stored as a string when infinite; JSON has no infinity.
  io::Json psnr = std::isinf(m.psnr) ? io::Json("inf") : io::Json(m.psnr);
  return {{"ssim", m.ssim},
          {"psnr", psnr},
          {"f1", m.f1},
          {"count", m.particles.count()},
          {"mean_size", m.particles.mean_size()},
          {"mean_diameter", m.particles.mean_diameter()},
          {"mean_shape", m.particles.mean_shape()},
          {"particles", parts}};
}

Metrics metrics_from_json(const io::Json& j) {
  Metrics m;
  m.ssim = j.at("ssim").get<double>();
  m.psnr = j.at("psnr").is_string() ? analysis::kPsnrIdentical : j.at("psnr").get<double>();
  m.f1 = j.at("f1").get<double>();
  m.particles.dims = 2;
  for (const auto& p : j.at("particles")) {
    analysis::Particle q;
    q.size = p.at(0).get<double>();
    q.boundary = p.at(1).get<double>();
    q.eq_diameter = p.at(2).get<double>();
    q.shape = p.at(3).get<double>();
    q.label = static_cast<std::int64_t>(m.particles.particles.size()) + 1;
    m.particles.particles.push_back(q);
  }
  return m;
}

std::string fmt(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace etomo::pipeline
