#include "etomo/deep/unet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "etomo/core/random.hpp"

namespace etomo::deep {
namespace {

std::string layer(const char* part, int index, const char* conv) {
  return std::string(part) + std::to_string(index) + "." + conv;
}

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <typename T>
ad::TensorPtr<T> conv_relu(ad::Tape<T>& tape, const ad::ParamSet<T>& ps, const std::string& name,
                           const ad::TensorPtr<T>& x) {
  return ad::relu(tape, ad::conv2d(tape, x, ps.find(name + ".w"), ps.find(name + ".b")));
}

}  // namespace

void UNetSpec::validate() const {
  if (channels.empty()) throw std::invalid_argument("U-Net needs at least one block");
  for (int c : channels) {
    if (c < 1) throw std::invalid_argument("U-Net channel counts must be positive");
  }
  if (in_channels < 1) throw std::invalid_argument("U-Net input channels must be positive");
  if (depth() > 12) throw std::invalid_argument("U-Net depth above 12 is not supported");
}

template <typename T>
UNet<T> build_unet(const UNetSpec& spec, std::uint64_t seed) {
  spec.validate();
  UNet<T> net;
  net.spec = spec;
  Rng rng(seed);
  auto add_conv = [&](const std::string& name, int cin, int cout, int k) {
    auto w = net.params.add(name + ".w", {cout, cin, k, k});
    const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * k * k));
    for (T& v : w->value) v = static_cast<T>(rng.uniform(-bound, bound));
    net.params.add(name + ".b", {cout});
  };
  int prev = spec.in_channels;
  for (int i = 0; i < spec.depth(); ++i) {
    const int c = spec.channels[i];
    add_conv(layer("enc", i, "conv1"), prev, c, 3);
    add_conv(layer("enc", i, "conv2"), c, c, 3);
    prev = c;
  }
  for (int i = spec.depth() - 2; i >= 0; --i) {
    const int c = spec.channels[i];
    add_conv(layer("dec", i, "conv1"), c + prev, c, 3);
    add_conv(layer("dec", i, "conv2"), c, c, 3);
    prev = c;
  }
  const int c0 = spec.channels.front();
  add_conv("head.conv1", c0, c0, 1);
  add_conv("head.conv2", c0, 1, 1);
  return net;
}

template <typename T>
ad::TensorPtr<T> UNet<T>::forward(ad::Tape<T>& tape, const ad::TensorPtr<T>& x) const {
  if (x->shape.size() != 3 || x->channels() != spec.in_channels) {
    throw ad::ShapeError("U-Net input must be [" + std::to_string(spec.in_channels) +
                         ",H,W], got " + ad::to_string(x->shape));
  }
  const int m = spec.multiple();
  if (x->height() % m != 0 || x->width() % m != 0) {
    throw ad::ShapeError("U-Net input " + ad::to_string(x->shape) +
                         ": spatial size must be divisible by " + std::to_string(m));
  }
  std::vector<ad::TensorPtr<T>> skips;
  auto h = x;
  for (int i = 0; i < spec.depth(); ++i) {
    if (i > 0) h = ad::maxpool2(tape, h);
    h = conv_relu(tape, params, layer("enc", i, "conv1"), h);
    h = conv_relu(tape, params, layer("enc", i, "conv2"), h);
    skips.push_back(h);
  }
  for (int i = spec.depth() - 2; i >= 0; --i) {
    h = ad::concat_channels(tape, skips[i], ad::upsample2(tape, h));
    h = conv_relu(tape, params, layer("dec", i, "conv1"), h);
    h = conv_relu(tape, params, layer("dec", i, "conv2"), h);
  }
  h = ad::conv2d(tape, h, params.find("head.conv1.w"), params.find("head.conv1.b"));
  return ad::conv2d(tape, h, params.find("head.conv2.w"), params.find("head.conv2.b"));
}

template <typename T>
ad::TensorPtr<T> mixed_loss(ad::Tape<T>& tape, const ad::TensorPtr<T>& x_ref,
                            const ad::TensorPtr<T>& x_out, double alpha, double data_range) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("mixed_loss: alpha must lie in [0, 1]");
  }
  if (alpha == 0.0) return ad::l1_loss(tape, x_ref, x_out);
  const auto s = ad::ssim(tape, x_out, x_ref, static_cast<T>(data_range));
  const auto structural = ad::affine(tape, s, static_cast<T>(-alpha), static_cast<T>(alpha));
  if (alpha == 1.0) return structural;
  const auto l1 = ad::affine(tape, ad::l1_loss(tape, x_ref, x_out), static_cast<T>(1.0 - alpha));
  return ad::add(tape, structural, l1);
}

Padding padding_for(int height, int width, int multiple) {
  if (height < 1 || width < 1 || multiple < 1) {
    throw std::invalid_argument("padding_for: sizes must be positive");
  }
  Padding p;
  p.height = (height + multiple - 1) / multiple * multiple;
  p.width = (width + multiple - 1) / multiple * multiple;
  p.top = (p.height - height) / 2;
  p.left = (p.width - width) / 2;
  return p;
}

template <typename T>
ad::TensorPtr<T> pad_reflect(const proj::Image2D& x, const Padding& p) {
  auto t = ad::make_tensor<T>({1, p.height, p.width});
  for (int i = 0; i < p.height; ++i) {
    const int si = mirror(i - p.top, x.height);
    for (int j = 0; j < p.width; ++j) {
      t->value[static_cast<std::size_t>(i) * p.width + j] =
          static_cast<T>(x.at(si, mirror(j - p.left, x.width)));
    }
  }
  return t;
}

double data_range(const proj::Image2D& x) {
  const auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
  const double r = *hi - *lo;
  return r > 0.0 ? r : 1.0;
}

template struct UNet<float>;
template struct UNet<double>;
template UNet<float> build_unet<float>(const UNetSpec&, std::uint64_t);
template UNet<double> build_unet<double>(const UNetSpec&, std::uint64_t);
template ad::TensorPtr<float> mixed_loss<float>(ad::Tape<float>&, const ad::TensorPtr<float>&,
                                                const ad::TensorPtr<float>&, double, double);
template ad::TensorPtr<double> mixed_loss<double>(ad::Tape<double>&, const ad::TensorPtr<double>&,
                                                  const ad::TensorPtr<double>&, double, double);
template ad::TensorPtr<float> pad_reflect<float>(const proj::Image2D&, const Padding&);
template ad::TensorPtr<double> pad_reflect<double>(const proj::Image2D&, const Padding&);

}  // namespace etomo::deep
