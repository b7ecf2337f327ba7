#pragma once

#include <functional>
#include <vector>

#include "etomo/autodiff/tensor.hpp"

namespace etomo::ad {

/// Ordered record of differentiable operations.
///
/// Operations append a backward closure when at least one of their inputs
/// requires a gradient. Since an operation can only consume tensors that
/// already exist, the record is topologically sorted by construction and
/// `backward` replays it in reverse, visiting each entry exactly once. The
/// closures hold shared ownership of their operands, so intermediate
/// activations live exactly as long as the record.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(BackwardFn fn) { ops_.push_back(std::move(fn)); }

  /// Seeds d(loss)/d(loss) = 1, propagates to every requires_grad tensor, then
  /// clears the record. Gradients accumulate into existing `grad` buffers.
  void backward(const TensorPtr<T>& loss);

  /// Vector-Jacobian product: seeds `output`'s gradient with `seed` (same
  /// size as the output) instead of 1, then propagates and clears.
  void backward(const TensorPtr<T>& output, const std::vector<T>& seed);

  void clear() { ops_.clear(); }
  std::size_t size() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }

 private:
  std::vector<BackwardFn> ops_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace etomo::ad
