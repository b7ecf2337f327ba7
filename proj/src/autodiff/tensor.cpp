#include "etomo/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace etomo::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape s, bool needs_grad)
    : shape(std::move(s)), value(numel(shape), T(0)), requires_grad(needs_grad) {}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values, bool needs_grad)
    : shape(std::move(s)), value(std::move(values)), requires_grad(needs_grad) {
  if (value.size() != numel(shape)) {
    throw ShapeError("tensor of shape " + to_string(shape) + " given " +
                     std::to_string(value.size()) + " values");
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (value.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape));
  return value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
std::vector<T>& Tensor<T>::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  return grad;
}

template struct Tensor<float>;
template struct Tensor<double>;

}  // namespace etomo::ad
