#include "etomo/autodiff/adam.hpp"

#include <cmath>

namespace etomo::ad {

template <typename T>
TensorPtr<T> ParamSet<T>::add(std::string name, Shape shape) {
  for (const auto& e : entries_) {
    if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  auto t = make_tensor<T>(std::move(shape), true);
  entries_.push_back({std::move(name), t});
  return t;
}

template <typename T>
const TensorPtr<T>& ParamSet<T>::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
std::size_t ParamSet<T>::count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor->size();
  return n;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& e : entries_) e.tensor->zero_grad();
}

template <typename T>
ParamSet<T> ParamSet<T>::clone() const {
  ParamSet copy;
  for (const auto& e : entries_) {
    copy.entries_.push_back({e.name, make_tensor<T>(e.tensor->shape, e.tensor->value, true)});
  }
  return copy;
}

template <typename T>
void ParamSet<T>::assign(const ParamSet& other) {
  if (other.entries_.size() != entries_.size()) {
    throw ShapeError("parameter set sizes differ: " + std::to_string(entries_.size()) + " vs " +
                     std::to_string(other.entries_.size()));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& src = other.entries_[i];
    auto& dst = entries_[i];
    if (src.name != dst.name || src.tensor->shape != dst.tensor->shape) {
      throw ShapeError("parameter " + dst.name + " " + to_string(dst.tensor->shape) +
                       " cannot take " + src.name + " " + to_string(src.tensor->shape));
    }
    dst.tensor->value = src.tensor->value;
  }
}

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ParamSet<T>& params, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.tensor->size(), T(0));
    s.v.emplace_back(e.tensor->size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(ParamSet<T>& params, AdamState<T>& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " tensors but there are " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto n = params[p].tensor->size();
    if (state.m[p].size() != n || state.v[p].size() != n) {
      throw ShapeError("adam_step: moment size mismatch for parameter " + params[p].name);
    }
  }
  state.step += 1;
  const double b1 = state.hyper.beta1;
  const double b2 = state.hyper.beta2;
  const T bc1 = static_cast<T>(1.0 - std::pow(b1, static_cast<double>(state.step)));
  const T bc2 = static_cast<T>(1.0 - std::pow(b2, static_cast<double>(state.step)));
  const T tb1 = static_cast<T>(b1);
  const T tb2 = static_cast<T>(b2);
  const T teps = static_cast<T>(state.hyper.eps);
  const T tlr = static_cast<T>(lr);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& t = *params[p].tensor;
    const bool has_grad = !t.grad.empty();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const T g = has_grad ? t.grad[i] : T(0);
      m[i] = tb1 * m[i] + (T(1) - tb1) * g;
      v[i] = tb2 * v[i] + (T(1) - tb2) * g * g;
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      t.value[i] -= tlr * mhat / (std::sqrt(vhat) + teps);
    }
  }
}

template class ParamSet<float>;
template class ParamSet<double>;
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ParamSet<float>&, AdamState<float>&, double);
template void adam_step(ParamSet<double>&, AdamState<double>&, double);

}  // namespace etomo::ad
