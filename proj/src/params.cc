// SPDX-License-Identifier: Apache-2.0

#include "biortd/params.h"

#include <stdexcept>

namespace biortd {

template <typename T>
ad::Tensor<T> ParamStore<T>::Add(std::string name, ad::Tensor<T> tensor,
                                 bool apply_weight_decay, int depth) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  tensor.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), tensor, apply_weight_decay, depth});
  return tensor;
}

template <typename T>
const Parameter<T>& ParamStore<T>::Get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("unknown parameter: " + name);
  }
  return entries_[it->second];
}

template <typename T>
std::vector<T> ParamStore<T>::Grad(const std::string& name) const {
  const ad::Tensor<T>& t = Get(name).tensor;
  if (!t.has_grad()) return std::vector<T>(static_cast<size_t>(t.numel()), T(0));
  auto g = t.grad();
  return {g.begin(), g.end()};
}

template <typename T>
void ParamStore<T>::ZeroGrad() {
  for (auto& p : entries_) p.tensor.ZeroGrad();
}

template <typename T>
int64_t ParamStore<T>::NumValues() const {
  int64_t n = 0;
  for (const auto& p : entries_) n += p.tensor.numel();
  return n;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace biortd
