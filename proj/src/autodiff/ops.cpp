#include "etomo/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace etomo::ad {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
bool needs_grad(const TensorPtr<T>& a) {
  return a->requires_grad;
}
template <typename T>
bool needs_grad(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  return a->requires_grad || b->requires_grad;
}

template <typename T>
void require_image(const TensorPtr<T>& t, const char* op, const char* what) {
  if (t->shape.size() != 3) {
    throw ShapeError(std::string(op) + ": " + what + " must be [C,H,W], got " +
                     to_string(t->shape));
  }
}

template <typename T>
void require_same_shape(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* op) {
  if (a->shape == b->shape) return;
  if (a->shape.size() != b->shape.size()) {
    throw ShapeError(std::string(op) + ": rank mismatch " + to_string(a->shape) + " vs " +
                     to_string(b->shape));
  }
  for (std::size_t d = 0; d < a->shape.size(); ++d) {
    if (a->shape[d] != b->shape[d]) {
      throw ShapeError(std::string(op) + ": dimension " + std::to_string(d) + " differs (" +
                       std::to_string(a->shape[d]) + " vs " + std::to_string(b->shape[d]) + ")");
    }
  }
}

// cols[(c*k*k + ky*k + kx), y*W + x] = in[c, y+ky-p, x+kx-p] (zero outside)
template <typename T>
void im2col(const T* in, int C, int H, int W, int k, T* cols) {
  const int p = k / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    const T* plane = in + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const int dy = ky - p;
        const int dx = kx - p;
        for (int y = 0; y < H; ++y) {
          T* dst = row + static_cast<std::size_t>(y) * W;
          const int sy = y + dy;
          if (sy < 0 || sy >= H) {
            std::fill(dst, dst + W, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * W;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(W, W - dx);
          std::fill(dst, dst + x0, T(0));
          for (int x = x0; x < x1; ++x) dst[x] = src[x + dx];
          std::fill(dst + std::max(x0, x1), dst + W, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int C, int H, int W, int k, T* out) {
  const int p = k / 2;
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c) {
    T* plane = out + c * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const int dy = ky - p;
        const int dx = kx - p;
        for (int y = 0; y < H; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const T* src = row + static_cast<std::size_t>(y) * W;
          T* dst = plane + static_cast<std::size_t>(sy) * W;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(W, W - dx);
          for (int x = x0; x < x1; ++x) dst[x + dx] += src[x];
        }
      }
    }
  }
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> g{};
  double total = 0.0;
  const int half = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - half;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable valid-mode Gaussian filter: H x W -> (H-10) x (W-10).
template <typename T>
std::vector<T> gauss_valid(const std::vector<T>& in, int H, int W) {
  static const auto g64 = gaussian_window();
  const int K = kSsimWindow;
  const int Ho = H - K + 1;
  const int Wo = W - K + 1;
  std::vector<T> tmp(static_cast<std::size_t>(H) * Wo);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < Wo; ++x) {
      T acc = 0;
      for (int k = 0; k < K; ++k) acc += T(g64[k]) * in[y * W + x + k];
      tmp[y * Wo + x] = acc;
    }
  }
  std::vector<T> out(static_cast<std::size_t>(Ho) * Wo);
  for (int y = 0; y < Ho; ++y) {
    for (int x = 0; x < Wo; ++x) {
      T acc = 0;
      for (int k = 0; k < K; ++k) acc += T(g64[k]) * tmp[(y + k) * Wo + x];
      out[y * Wo + x] = acc;
    }
  }
  return out;
}

// Adjoint of gauss_valid: (H-10) x (W-10) -> H x W.
template <typename T>
std::vector<T> gauss_valid_adjoint(const std::vector<T>& gout, int H, int W) {
  static const auto g64 = gaussian_window();
  const int K = kSsimWindow;
  const int Ho = H - K + 1;
  const int Wo = W - K + 1;
  std::vector<T> tmp(static_cast<std::size_t>(H) * Wo, T(0));
  for (int y = 0; y < Ho; ++y) {
    for (int x = 0; x < Wo; ++x) {
      const T v = gout[y * Wo + x];
      for (int k = 0; k < K; ++k) tmp[(y + k) * Wo + x] += T(g64[k]) * v;
    }
  }
  std::vector<T> in(static_cast<std::size_t>(H) * W, T(0));
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < Wo; ++x) {
      const T v = tmp[y * Wo + x];
      for (int k = 0; k < K; ++k) in[y * W + x + k] += T(g64[k]) * v;
    }
  }
  return in;
}

}  // namespace

template <typename T>
TensorPtr<T> conv2d(Tape<T>& tape, const TensorPtr<T>& input, const TensorPtr<T>& kernel,
                    const TensorPtr<T>& bias) {
  require_image(input, "conv2d", "input");
  if (kernel->shape.size() != 4) {
    throw ShapeError("conv2d: kernel must be [Cout,Cin,k,k], got " + to_string(kernel->shape));
  }
  const int cin = input->channels();
  const int H = input->height();
  const int W = input->width();
  const int cout = kernel->dim(0);
  const int k = kernel->dim(2);
  if (kernel->dim(1) != cin) {
    throw ShapeError("conv2d: kernel input-channel dimension is " +
                     std::to_string(kernel->dim(1)) + " but input has " + std::to_string(cin) +
                     " channels");
  }
  if (kernel->dim(3) != k || k % 2 == 0) {
    throw ShapeError("conv2d: kernel spatial size must be odd and square, got " +
                     to_string(kernel->shape));
  }
  if (bias->shape != Shape{cout}) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(cout) + "], got " +
                     to_string(bias->shape));
  }

  const std::size_t hw = static_cast<std::size_t>(H) * W;
  const int rows = cin * k * k;
  auto cols = std::make_shared<std::vector<T>>();
  const T* col_data = input->value.data();
  if (k != 1) {
    cols->resize(static_cast<std::size_t>(rows) * hw);
    im2col(input->value.data(), cin, H, W, k, cols->data());
    col_data = cols->data();
  }

  auto out = make_tensor<T>({cout, H, W}, needs_grad(input, kernel) || bias->requires_grad);
  {
    ConstMatMap<T> K(kernel->value.data(), cout, rows);
    ConstMatMap<T> X(col_data, rows, static_cast<Eigen::Index>(hw));
    MatMap<T> Y(out->value.data(), cout, static_cast<Eigen::Index>(hw));
    Y.noalias() = K * X;
    for (int o = 0; o < cout; ++o) Y.row(o).array() += bias->value[o];
  }

  if (out->requires_grad) {
    tape.record([input, kernel, bias, out, cols, cin, H, W, k, cout, rows, hw]() {
      if (out->grad.empty()) return;
      ConstMatMap<T> dY(out->grad.data(), cout, static_cast<Eigen::Index>(hw));
      const T* col_data = k == 1 ? input->value.data() : cols->data();
      ConstMatMap<T> X(col_data, rows, static_cast<Eigen::Index>(hw));
      if (kernel->requires_grad) {
        MatMap<T> dK(kernel->ensure_grad().data(), cout, rows);
        dK.noalias() += dY * X.transpose();
      }
      if (bias->requires_grad) {
        // Plain loop: Eigen's vectorised reductions peel by pointer
        // alignment, which would make the sum order allocation-dependent.
        auto& db = bias->ensure_grad();
        for (int o = 0; o < cout; ++o) {
          const T* row = out->grad.data() + static_cast<std::size_t>(o) * hw;
          T acc = T(0);
          for (std::size_t i = 0; i < hw; ++i) acc += row[i];
          db[o] += acc;
        }
      }
      if (input->requires_grad) {
        ConstMatMap<T> K(kernel->value.data(), cout, rows);
        auto& dx = input->ensure_grad();
        if (k == 1) {
          MatMap<T> dX(dx.data(), rows, static_cast<Eigen::Index>(hw));
          dX.noalias() += K.transpose() * dY;
        } else {
          RowMat<T> dcols = K.transpose() * dY;
          col2im_add(dcols.data(), cin, H, W, k, dx.data());
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& input) {
  auto out = make_tensor<T>(input->shape, needs_grad(input));
  const auto& x = input->value;
  for (std::size_t i = 0; i < x.size(); ++i) out->value[i] = x[i] > T(0) ? x[i] : T(0);
  if (out->requires_grad) {
    tape.record([input, out]() {
      if (out->grad.empty()) return;
      auto& dx = input->ensure_grad();
      const auto& x = input->value;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > T(0)) dx[i] += out->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> maxpool2(Tape<T>& tape, const TensorPtr<T>& input) {
  require_image(input, "maxpool2", "input");
  const int C = input->channels();
  const int H = input->height();
  const int W = input->width();
  if (H % 2 != 0) throw ShapeError("maxpool2: height " + std::to_string(H) + " is odd");
  if (W % 2 != 0) throw ShapeError("maxpool2: width " + std::to_string(W) + " is odd");
  const int Ho = H / 2;
  const int Wo = W / 2;
  auto out = make_tensor<T>({C, Ho, Wo}, needs_grad(input));
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out->size());
  const auto& x = input->value;
  std::size_t o = 0;
  for (int c = 0; c < C; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * H * W;
    for (int y = 0; y < Ho; ++y) {
      for (int xx = 0; xx < Wo; ++xx, ++o) {
        const std::size_t i0 = base + static_cast<std::size_t>(2 * y) * W + 2 * xx;
        const std::size_t cand[4] = {i0, i0 + 1, i0 + W, i0 + W + 1};
        std::size_t best = cand[0];
        for (int j = 1; j < 4; ++j) {
          if (x[cand[j]] > x[best]) best = cand[j];
        }
        out->value[o] = x[best];
        (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  if (out->requires_grad) {
    tape.record([input, out, argmax]() {
      if (out->grad.empty()) return;
      auto& dx = input->ensure_grad();
      for (std::size_t i = 0; i < out->grad.size(); ++i) dx[(*argmax)[i]] += out->grad[i];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> upsample2(Tape<T>& tape, const TensorPtr<T>& input) {
  require_image(input, "upsample2", "input");
  const int C = input->channels();
  const int H = input->height();
  const int W = input->width();
  const int W2 = 2 * W;
  auto out = make_tensor<T>({C, 2 * H, W2}, needs_grad(input));
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < 2 * H; ++y) {
      const T* src = input->value.data() + (static_cast<std::size_t>(c) * H + y / 2) * W;
      T* dst = out->value.data() + (static_cast<std::size_t>(c) * 2 * H + y) * W2;
      for (int x = 0; x < W2; ++x) dst[x] = src[x / 2];
    }
  }
  if (out->requires_grad) {
    tape.record([input, out, C, H, W, W2]() {
      if (out->grad.empty()) return;
      auto& dx = input->ensure_grad();
      for (int c = 0; c < C; ++c) {
        for (int y = 0; y < 2 * H; ++y) {
          const T* src = out->grad.data() + (static_cast<std::size_t>(c) * 2 * H + y) * W2;
          T* dst = dx.data() + (static_cast<std::size_t>(c) * H + y / 2) * W;
          for (int x = 0; x < W2; ++x) dst[x / 2] += src[x];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> concat_channels(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_image(a, "concat_channels", "first operand");
  require_image(b, "concat_channels", "second operand");
  if (a->height() != b->height()) {
    throw ShapeError("concat_channels: height differs (" + std::to_string(a->height()) + " vs " +
                     std::to_string(b->height()) + ")");
  }
  if (a->width() != b->width()) {
    throw ShapeError("concat_channels: width differs (" + std::to_string(a->width()) + " vs " +
                     std::to_string(b->width()) + ")");
  }
  auto out = make_tensor<T>({a->channels() + b->channels(), a->height(), a->width()},
                            needs_grad(a, b));
  std::copy(a->value.begin(), a->value.end(), out->value.begin());
  std::copy(b->value.begin(), b->value.end(), out->value.begin() + a->size());
  if (out->requires_grad) {
    tape.record([a, b, out]() {
      if (out->grad.empty()) return;
      const auto na = static_cast<std::ptrdiff_t>(a->size());
      if (a->requires_grad) {
        auto& da = a->ensure_grad();
        for (std::ptrdiff_t i = 0; i < na; ++i) da[i] += out->grad[i];
      }
      if (b->requires_grad) {
        auto& db = b->ensure_grad();
        for (std::size_t i = 0; i < b->size(); ++i) db[i] += out->grad[na + i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> crop(Tape<T>& tape, const TensorPtr<T>& input, int top, int left, int height,
                  int width) {
  require_image(input, "crop", "input");
  const int C = input->channels();
  const int H = input->height();
  const int W = input->width();
  if (top < 0 || height < 0 || top + height > H) {
    throw ShapeError("crop: rows [" + std::to_string(top) + "," + std::to_string(top + height) +
                     ") exceed height " + std::to_string(H));
  }
  if (left < 0 || width < 0 || left + width > W) {
    throw ShapeError("crop: columns [" + std::to_string(left) + "," +
                     std::to_string(left + width) + ") exceed width " + std::to_string(W));
  }
  auto out = make_tensor<T>({C, height, width}, needs_grad(input));
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < height; ++y) {
      const T* src = input->value.data() + (static_cast<std::size_t>(c) * H + top + y) * W + left;
      std::copy(src, src + width,
                out->value.data() + (static_cast<std::size_t>(c) * height + y) * width);
    }
  }
  if (out->requires_grad) {
    tape.record([input, out, C, H, W, top, left, height, width]() {
      if (out->grad.empty()) return;
      auto& dx = input->ensure_grad();
      for (int c = 0; c < C; ++c) {
        for (int y = 0; y < height; ++y) {
          const T* src = out->grad.data() + (static_cast<std::size_t>(c) * height + y) * width;
          T* dst = dx.data() + (static_cast<std::size_t>(c) * H + top + y) * W + left;
          for (int x = 0; x < width; ++x) dst[x] += src[x];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(a, b, "add");
  auto out = make_tensor<T>(a->shape, needs_grad(a, b));
  for (std::size_t i = 0; i < a->size(); ++i) out->value[i] = a->value[i] + b->value[i];
  if (out->requires_grad) {
    tape.record([a, b, out]() {
      if (out->grad.empty()) return;
      for (const auto* t : {&a, &b}) {
        if (!(*t)->requires_grad) continue;
        auto& d = (*t)->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += out->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> affine(Tape<T>& tape, const TensorPtr<T>& a, T factor, T offset) {
  auto out = make_tensor<T>(a->shape, needs_grad(a));
  for (std::size_t i = 0; i < a->size(); ++i) out->value[i] = factor * a->value[i] + offset;
  if (out->requires_grad) {
    tape.record([a, out, factor]() {
      if (out->grad.empty()) return;
      auto& d = a->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * out->grad[i];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> sum(Tape<T>& tape, const TensorPtr<T>& a) {
  auto out = make_tensor<T>({1}, needs_grad(a));
  T acc = 0;
  for (T v : a->value) acc += v;
  out->value[0] = acc;
  if (out->requires_grad) {
    tape.record([a, out]() {
      if (out->grad.empty()) return;
      auto& d = a->ensure_grad();
      for (auto& v : d) v += out->grad[0];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> l1_loss(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(a, b, "l1_loss");
  const T n = static_cast<T>(a->size());
  auto out = make_tensor<T>({1}, needs_grad(a, b));
  T acc = 0;
  for (std::size_t i = 0; i < a->size(); ++i) acc += std::abs(a->value[i] - b->value[i]);
  out->value[0] = acc / n;
  if (out->requires_grad) {
    tape.record([a, b, out, n]() {
      if (out->grad.empty()) return;
      const T g = out->grad[0] / n;
      for (std::size_t i = 0; i < a->size(); ++i) {
        const T d = a->value[i] - b->value[i];
        const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
        if (a->requires_grad) a->ensure_grad()[i] += s;
        if (b->requires_grad) b->ensure_grad()[i] -= s;
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mse_loss(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(a, b, "mse_loss");
  const T n = static_cast<T>(a->size());
  auto out = make_tensor<T>({1}, needs_grad(a, b));
  T acc = 0;
  for (std::size_t i = 0; i < a->size(); ++i) {
    const T d = a->value[i] - b->value[i];
    acc += d * d;
  }
  out->value[0] = acc / n;
  if (out->requires_grad) {
    tape.record([a, b, out, n]() {
      if (out->grad.empty()) return;
      const T g = T(2) * out->grad[0] / n;
      for (std::size_t i = 0; i < a->size(); ++i) {
        const T s = g * (a->value[i] - b->value[i]);
        if (a->requires_grad) a->ensure_grad()[i] += s;
        if (b->requires_grad) b->ensure_grad()[i] -= s;
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> ssim(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b, T data_range) {
  require_image(a, "ssim", "first operand");
  require_same_shape(a, b, "ssim");
  if (a->channels() != 1) {
    throw ShapeError("ssim: expected 1 channel, got " + std::to_string(a->channels()));
  }
  const int H = a->height();
  const int W = a->width();
  if (H < kSsimWindow || W < kSsimWindow) {
    throw ShapeError("ssim: image " + std::to_string(H) + "x" + std::to_string(W) +
                     " is smaller than the " + std::to_string(kSsimWindow) + "x" +
                     std::to_string(kSsimWindow) + " window");
  }
  if (!(data_range > T(0))) throw std::invalid_argument("ssim: data_range must be positive");

  const T c1 = (T(0.01) * data_range) * (T(0.01) * data_range);
  const T c2 = (T(0.03) * data_range) * (T(0.03) * data_range);
  const std::size_t n = a->size();
  std::vector<T> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a->value[i] * a->value[i];
    bb[i] = b->value[i] * b->value[i];
    ab[i] = a->value[i] * b->value[i];
  }
  auto mu_a = gauss_valid(a->value, H, W);
  auto mu_b = gauss_valid(b->value, H, W);
  auto e_aa = gauss_valid(aa, H, W);
  auto e_bb = gauss_valid(bb, H, W);
  auto e_ab = gauss_valid(ab, H, W);
  const std::size_t m = mu_a.size();

  // Per-window partial derivatives, filled only when a backward pass is needed.
  const bool grad = needs_grad(a, b);
  std::vector<T> d_mu_a, d_mu_b, d_e_aa, d_e_bb, d_e_ab;
  if (grad) {
    d_mu_a.resize(m);
    d_mu_b.resize(m);
    d_e_aa.resize(m);
    d_e_bb.resize(m);
    d_e_ab.resize(m);
  }
  T total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const T ma = mu_a[i];
    const T mb = mu_b[i];
    const T a1 = T(2) * (ma * mb) + c1;
    const T a2 = T(2) * (e_ab[i] - ma * mb) + c2;
    const T b1 = (ma * ma + mb * mb) + c1;
    const T b2 = ((e_aa[i] - ma * ma) + (e_bb[i] - mb * mb)) + c2;
    const T den = b1 * b2;
    const T s = (a1 * a2) / den;
    total += s;
    if (grad) {
      const T common = (a2 - a1) / den;
      const T inv_diff = T(1) / b1 - T(1) / b2;
      d_mu_a[i] = T(2) * mb * common - T(2) * ma * s * inv_diff;
      d_mu_b[i] = T(2) * ma * common - T(2) * mb * s * inv_diff;
      d_e_aa[i] = -s / b2;
      d_e_bb[i] = -s / b2;
      d_e_ab[i] = T(2) * a1 / den;
    }
  }
  auto out = make_tensor<T>({1}, grad);
  out->value[0] = total / static_cast<T>(m);

  if (grad) {
    struct Saved {
      std::vector<T> d_mu_a, d_mu_b, d_e_aa, d_e_bb, d_e_ab;
    };
    auto saved = std::make_shared<Saved>(Saved{std::move(d_mu_a), std::move(d_mu_b),
                                               std::move(d_e_aa), std::move(d_e_bb),
                                               std::move(d_e_ab)});
    tape.record([a, b, out, saved, H, W, m]() {
      if (out->grad.empty()) return;
      const T w = out->grad[0] / static_cast<T>(m);
      auto scaled = [w](const std::vector<T>& v) {
        std::vector<T> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) r[i] = w * v[i];
        return r;
      };
      const auto g_ab = gauss_valid_adjoint(scaled(saved->d_e_ab), H, W);
      if (a->requires_grad) {
        const auto g_mu = gauss_valid_adjoint(scaled(saved->d_mu_a), H, W);
        const auto g_sq = gauss_valid_adjoint(scaled(saved->d_e_aa), H, W);
        auto& da = a->ensure_grad();
        for (std::size_t i = 0; i < da.size(); ++i) {
          da[i] += g_mu[i] + T(2) * a->value[i] * g_sq[i] + b->value[i] * g_ab[i];
        }
      }
      if (b->requires_grad) {
        const auto g_mu = gauss_valid_adjoint(scaled(saved->d_mu_b), H, W);
        const auto g_sq = gauss_valid_adjoint(scaled(saved->d_e_bb), H, W);
        auto& db = b->ensure_grad();
        for (std::size_t i = 0; i < db.size(); ++i) {
          db[i] += g_mu[i] + T(2) * b->value[i] * g_sq[i] + a->value[i] * g_ab[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> tv_penalty(Tape<T>& tape, const TensorPtr<T>& x, T eps) {
  require_image(x, "tv_penalty", "input");
  if (x->channels() != 1) {
    throw ShapeError("tv_penalty: expected 1 channel, got " + std::to_string(x->channels()));
  }
  const int H = x->height();
  const int W = x->width();
  const auto& v = x->value;
  const T eps2 = eps * eps;
  auto out = make_tensor<T>({1}, needs_grad(x));
  T acc = 0;
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * W + j;
      const T dh = j + 1 < W ? v[p + 1] - v[p] : T(0);
      const T dv = i + 1 < H ? v[p + W] - v[p] : T(0);
      acc += std::sqrt(dh * dh + dv * dv + eps2) - eps;
    }
  }
  out->value[0] = acc;
  if (out->requires_grad) {
    tape.record([x, out, H, W, eps2]() {
      if (out->grad.empty()) return;
      const T g = out->grad[0];
      const auto& v = x->value;
      auto& dx = x->ensure_grad();
      for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
          const std::size_t p = static_cast<std::size_t>(i) * W + j;
          const T dh = j + 1 < W ? v[p + 1] - v[p] : T(0);
          const T dv = i + 1 < H ? v[p + W] - v[p] : T(0);
          const T inv = g / std::sqrt(dh * dh + dv * dv + eps2);
          dx[p] -= (dh + dv) * inv;
          if (j + 1 < W) dx[p + 1] += dh * inv;
          if (i + 1 < H) dx[p + W] += dv * inv;
        }
      }
    });
  }
  return out;
}

#define ETOMO_INSTANTIATE_OPS(T)                                                              \
  template TensorPtr<T> conv2d(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&,           \
                               const TensorPtr<T>&);                                         \
  template TensorPtr<T> relu(Tape<T>&, const TensorPtr<T>&);                                 \
  template TensorPtr<T> maxpool2(Tape<T>&, const TensorPtr<T>&);                             \
  template TensorPtr<T> upsample2(Tape<T>&, const TensorPtr<T>&);                            \
  template TensorPtr<T> concat_channels(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> crop(Tape<T>&, const TensorPtr<T>&, int, int, int, int);             \
  template TensorPtr<T> add(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&);             \
  template TensorPtr<T> affine(Tape<T>&, const TensorPtr<T>&, T, T);                         \
  template TensorPtr<T> sum(Tape<T>&, const TensorPtr<T>&);                                  \
  template TensorPtr<T> l1_loss(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&);         \
  template TensorPtr<T> mse_loss(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&);        \
  template TensorPtr<T> ssim(Tape<T>&, const TensorPtr<T>&, const TensorPtr<T>&, T);         \
  template TensorPtr<T> tv_penalty(Tape<T>&, const TensorPtr<T>&, T);

ETOMO_INSTANTIATE_OPS(float)
ETOMO_INSTANTIATE_OPS(double)

#undef ETOMO_INSTANTIATE_OPS

}  // namespace etomo::ad
