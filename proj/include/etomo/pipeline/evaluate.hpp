#pragma once

#include <string>
#include <vector>

#include "etomo/analysis/analysis.hpp"
#include "etomo/io/artifact.hpp"

namespace etomo::pipeline {

/// Quality metrics of one reconstruction against its reference, plus the
/// morphometry of the reconstruction (Otsu, watershed, labeling).
struct Metrics {
  double ssim = 0.0;
  double psnr = 0.0;
  double f1 = 0.0;
  analysis::ParticleStats particles;
};

Metrics evaluate(const proj::Image2D& recon, const proj::Image2D& reference);
/// Morphometry only (used for phantoms and references).
analysis::ParticleStats morphometry(const proj::Image2D& x);

io::Json metrics_to_json(const Metrics& m);
Metrics metrics_from_json(const io::Json& j);

/// "%.6f"-style fixed formatting used by every CSV; "inf" for infinities.
std::string fmt(double v, int decimals = 6);

}  // namespace etomo::pipeline
