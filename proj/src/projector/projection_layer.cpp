#include "etomo/projector/projection_layer.hpp"

#include <memory>
#include <string>

namespace etomo::proj {

template <typename T>
ad::TensorPtr<T> project(ad::Tape<T>& tape, const ad::TensorPtr<T>& x, const TiltGeometry& g) {
  if (x->shape != ad::Shape{1, g.height, g.width}) {
    throw ad::ShapeError("project: input " + ad::to_string(x->shape) + " does not match [1," +
                         std::to_string(g.height) + "," + std::to_string(g.width) + "]");
  }
  const std::vector<double> image(x->value.begin(), x->value.end());
  std::vector<double> sino(static_cast<std::size_t>(g.n_angles()) * g.n_detector);
  forward_project_into(image.data(), g, sino.data());
  auto out = ad::make_tensor<T>({1, g.n_angles(), g.n_detector},
                                std::vector<T>(sino.begin(), sino.end()), x->requires_grad);
  if (out->requires_grad) {
    auto geom = std::make_shared<const TiltGeometry>(g);
    tape.record([x, out, geom]() {
      if (out->grad.empty()) return;
      const std::vector<double> gy(out->grad.begin(), out->grad.end());
      std::vector<double> gx(x->size(), 0.0);
      back_project_into(gy.data(), *geom, gx.data());
      auto& dx = x->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) dx[i] += static_cast<T>(gx[i]);
    });
  }
  return out;
}

template ad::TensorPtr<float> project(ad::Tape<float>&, const ad::TensorPtr<float>&,
                                      const TiltGeometry&);
template ad::TensorPtr<double> project(ad::Tape<double>&, const ad::TensorPtr<double>&,
                                       const TiltGeometry&);

}  // namespace etomo::proj
