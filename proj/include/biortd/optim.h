// SPDX-License-Identifier: Apache-2.0
//
// Adam with decoupled weight decay, linear warmup/decay schedules and
// layerwise learning-rate decay.

#ifndef BIORTD_OPTIM_H_
#define BIORTD_OPTIM_H_

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "biortd/params.h"

namespace biortd {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  double weight_decay = 0.0;
};

template <typename T>
struct AdamMoments {
  std::vector<T> m;
  std::vector<T> v;
};

template <typename T>
struct AdamState {
  int64_t step = 0;  // completed updates
  std::map<std::string, AdamMoments<T>> moments;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter " + param),
        param_(param) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

// One update of a single tensor. `completed_steps` is the number of updates
// already applied; bias correction uses completed_steps + 1.
template <typename T>
void AdamUpdate(std::span<T> param, std::span<const T> grad,
                AdamMoments<T>& moments, int64_t completed_steps, double lr,
                const AdamConfig& config, bool apply_weight_decay);

// Updates every parameter of the store from its accumulated gradient, then
// advances state.step by one. lr_for gives the learning rate per parameter.
// Throws NonFiniteGradient before touching anything if a gradient is NaN/inf.
template <typename T>
void AdamStep(ParamStore<T>& params, AdamState<T>& state,
              const AdamConfig& config,
              const std::function<double(const Parameter<T>&)>& lr_for);

// Linear warmup to base_lr, then linear decay to zero at total_steps.
struct LinearSchedule {
  double base_lr = 0.0;
  int64_t warmup_steps = 0;
  int64_t total_steps = 0;

  void Validate() const;
  // Steps past total_steps clamp to zero with a warning on stderr.
  double At(int64_t step) const;
};

// Learning rates per group: index 0 embeddings, 1..num_layers the encoder
// layers bottom to top, num_layers + 1 the head.
std::vector<double> LayerwiseLrs(double base_lr, double decay, int num_layers);

// Multiplier for a parameter depth (see Parameter::depth).
double LayerwiseMultiplier(int depth, double decay, int num_layers);

}  // namespace biortd

#endif  // BIORTD_OPTIM_H_
