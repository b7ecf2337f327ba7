#include "etomo/deep/dip.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "etomo/core/random.hpp"
#include "etomo/projector/projection_layer.hpp"
#include "etomo/recon/classical.hpp"

namespace etomo::deep {
namespace {

proj::Image2D to_image(const ad::Tensor<float>& t) {
  proj::Image2D x(t.height(), t.width());
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = t.value[i];
  return x;
}

}  // namespace

void DipConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("DIP iterations must be >= 0");
  if (!std::isfinite(lambda_tv) || lambda_tv < 0.0) {
    throw std::invalid_argument("DIP lambda must be finite and non-negative");
  }
  if (z_channels < 1) throw std::invalid_argument("DIP z channels must be positive");
  if (!(z_scale > 0.0)) throw std::invalid_argument("DIP z scale must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("DIP learning rate must be positive");
}

template <typename T>
ad::TensorPtr<T> make_dip_input(const DipConfig& cfg, int height, int width) {
  auto z = ad::make_tensor<T>({cfg.z_channels, height, width});
  Rng rng(derive_seed(cfg.seed, "dip-z"));
  for (T& v : z->value) v = static_cast<T>(cfg.z_scale * rng.uniform());
  return z;
}

template <typename T>
ad::TensorPtr<T> dip_objective(ad::Tape<T>& tape, const UNet<T>& net, const ad::TensorPtr<T>& z,
                               const Padding& pad, const proj::Sinogram& y,
                               const proj::TiltGeometry& g, double lambda,
                               ad::TensorPtr<T>* image) {
  auto x = net.forward(tape, z);
  if (pad.height != g.height || pad.width != g.width) {
    x = ad::crop(tape, x, pad.top, pad.left, g.height, g.width);
  }
  if (image) *image = x;
  const auto px = proj::project(tape, x, g);
  std::vector<T> yv(y.data.begin(), y.data.end());
  const auto target = ad::make_tensor<T>({1, g.n_angles(), g.n_detector}, std::move(yv));
  auto loss = ad::mse_loss(tape, px, target);
  if (lambda > 0.0) {
    loss = ad::add(tape, loss, ad::affine(tape, ad::tv_penalty(tape, x), static_cast<T>(lambda)));
  }
  return loss;
}

DipResult dip_reconstruct(const proj::Sinogram& y, const proj::TiltGeometry& g,
                          const DipConfig& cfg, const UNetSpec& spec,
                          const DipProgress& progress) {
  cfg.validate();
  g.validate();
  if (y.geometry.n_angles() != g.n_angles() || y.geometry.n_detector != g.n_detector ||
      y.data.size() != static_cast<std::size_t>(g.n_angles()) * g.n_detector) {
    throw proj::GeometryError("sinogram does not match the reconstruction geometry");
  }
  UNetSpec s = spec;
  s.in_channels = cfg.z_channels;
  auto net = build_unet<float>(s, derive_seed(cfg.seed, "dip-net"));
  const Padding pad = padding_for(g.height, g.width, s.multiple());
  const auto z = make_dip_input<float>(cfg, pad.height, pad.width);

  DipResult r;
  ad::Tape<float> tape;
  if (cfg.iterations == 0) {
    ad::TensorPtr<float> x;
    dip_objective(tape, net, z, pad, y, g, cfg.lambda_tv, &x);
    tape.clear();
    r.image = to_image(*x);
    return r;
  }
  auto adam = ad::AdamState<float>::zeros_like(net.params);
  r.loss_trace.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int it = 0; it < cfg.iterations; ++it) {
    net.params.zero_grad();
    ad::TensorPtr<float> x;
    const auto loss = dip_objective(tape, net, z, pad, y, g, cfg.lambda_tv, &x);
    const double v = loss->item();
    if (!std::isfinite(v)) {
      tape.clear();
      throw recon::DivergenceError("DIP: non-finite loss at iteration " + std::to_string(it));
    }
    r.loss_trace.push_back(v);
    if (r.best_iteration < 0 || v < r.best_loss) {
      r.best_iteration = it;
      r.best_loss = v;
      r.image = to_image(*x);
    }
    tape.backward(loss);
    ad::adam_step(net.params, adam, cfg.lr);
    if (progress) progress(it, v);
  }
  return r;
}

template ad::TensorPtr<float> make_dip_input<float>(const DipConfig&, int, int);
template ad::TensorPtr<double> make_dip_input<double>(const DipConfig&, int, int);
template ad::TensorPtr<float> dip_objective<float>(ad::Tape<float>&, const UNet<float>&,
                                                   const ad::TensorPtr<float>&, const Padding&,
                                                   const proj::Sinogram&, const proj::TiltGeometry&,
                                                   double, ad::TensorPtr<float>*);
template ad::TensorPtr<double> dip_objective<double>(ad::Tape<double>&, const UNet<double>&,
                                                     const ad::TensorPtr<double>&, const Padding&,
                                                     const proj::Sinogram&,
                                                     const proj::TiltGeometry&, double,
                                                     ad::TensorPtr<double>*);

}  // namespace etomo::deep
