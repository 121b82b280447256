// SPDX-License-Identifier: Apache-2.0

#ifndef BIORTD_PARAMS_H_
#define BIORTD_PARAMS_H_

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "biortd/autodiff.h"

namespace biortd {

// `depth` drives layerwise learning rates: 0 = embeddings, 1..L = encoder
// layers bottom to top, L + 1 = task or pretraining heads.
template <typename T>
struct Parameter {
  std::string name;
  ad::Tensor<T> tensor;
  bool apply_weight_decay = true;
  int depth = 0;
};

// Ordered collection of named trainable tensors. Tensors are shared handles:
// two stores (or two models) may hold the same underlying parameter.
template <typename T>
class ParamStore {
 public:
  ad::Tensor<T> Add(std::string name, ad::Tensor<T> tensor,
                    bool apply_weight_decay, int depth);

  bool Contains(const std::string& name) const {
    return index_.contains(name);
  }
  const Parameter<T>& Get(const std::string& name) const;
  ad::Tensor<T> tensor(const std::string& name) const {
    return Get(name).tensor;
  }
  const std::vector<Parameter<T>>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  // Gradient of a parameter, zeros when nothing reached it.
  std::vector<T> Grad(const std::string& name) const;
  void ZeroGrad();
  int64_t NumValues() const;

 private:
  std::vector<Parameter<T>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace biortd

#endif  // BIORTD_PARAMS_H_
