#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace etomo::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised by tensor operations on incompatible shapes. The message names the
/// offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor. Images are stored as [C, H, W]; scalars as [1].
///
/// `grad` is empty until a backward pass reaches the tensor, and is only ever
/// populated when `requires_grad` is set.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, bool needs_grad = false);
  Tensor(Shape s, std::vector<T> values, bool needs_grad = false);

  std::size_t size() const { return value.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  int channels() const { return shape.at(0); }
  int height() const { return shape.at(1); }
  int width() const { return shape.at(2); }

  /// Scalar read-out; the tensor must hold exactly one element.
  T item() const;

  void zero_grad();
  /// Allocates a zeroed gradient buffer if none exists yet.
  std::vector<T>& ensure_grad();
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape shape, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), requires_grad);
}

template <typename T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> values, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), std::move(values), requires_grad);
}

extern template struct Tensor<float>;
extern template struct Tensor<double>;

}  // namespace etomo::ad
