#pragma once

#include <string>
#include <vector>

#include "etomo/autodiff/tensor.hpp"

namespace etomo::ad {

/// Named, ordered collection of trainable tensors. The order is the
/// serialization order of checkpoints.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    TensorPtr<T> tensor;
  };

  /// Registers a new trainable tensor; names must be unique.
  TensorPtr<T> add(std::string name, Shape shape);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  const TensorPtr<T>& find(const std::string& name) const;

  /// Total number of scalar parameters.
  std::size_t count() const;
  void zero_grad();

  /// Deep copy of the values (gradients are not copied).
  ParamSet clone() const;
  /// Copies values from `other`, which must have identical names and shapes.
  void assign(const ParamSet& other);

 private:
  std::vector<Entry> entries_;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  long step = 0;
  AdamHyper hyper;

  /// Zero moments shaped like `params`.
  static AdamState zeros_like(const ParamSet<T>& params, AdamHyper hyper = {});
};

/// One bias-corrected Adam update using the gradients currently stored on the
/// parameters. Parameters without a gradient buffer are treated as having a
/// zero gradient.
template <typename T>
void adam_step(ParamSet<T>& params, AdamState<T>& state, double lr);

extern template class ParamSet<float>;
extern template class ParamSet<double>;
extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace etomo::ad
