#include "etomo/autodiff/tape.hpp"

namespace etomo::ad {

template <typename T>
void Tape<T>::backward(const TensorPtr<T>& loss) {
  if (!loss || loss->size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     (loss ? to_string(loss->shape) : std::string("<null>")));
  }
  if (!loss->requires_grad) {
    ops_.clear();
    return;
  }
  loss->ensure_grad()[0] += T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

template <typename T>
void Tape<T>::backward(const TensorPtr<T>& output, const std::vector<T>& seed) {
  if (!output || seed.size() != output->size()) {
    throw ShapeError("backward(): seed has " + std::to_string(seed.size()) +
                     " elements, output has " + std::to_string(output ? output->size() : 0));
  }
  if (!output->requires_grad) {
    ops_.clear();
    return;
  }
  auto& g = output->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace etomo::ad
