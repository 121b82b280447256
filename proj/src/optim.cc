// SPDX-License-Identifier: Apache-2.0

#include "biortd/optim.h"

#include <cmath>
#include <iostream>

namespace biortd {

template <typename T>
void AdamUpdate(std::span<T> param, std::span<const T> grad,
                AdamMoments<T>& moments, int64_t completed_steps, double lr,
                const AdamConfig& config, bool apply_weight_decay) {
  if (grad.size() != param.size()) {
    throw std::invalid_argument("adam: gradient size does not match parameter");
  }
  if (moments.m.empty()) {
    moments.m.assign(param.size(), T(0));
    moments.v.assign(param.size(), T(0));
  }
  const double t = static_cast<double>(completed_steps + 1);
  const double m_correction = 1.0 - std::pow(config.beta1, t);
  const double v_correction = 1.0 - std::pow(config.beta2, t);
  const double decay = apply_weight_decay ? config.weight_decay : 0.0;
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = config.beta1 * moments.m[i] + (1.0 - config.beta1) * g;
    const double v = config.beta2 * moments.v[i] + (1.0 - config.beta2) * g * g;
    moments.m[i] = static_cast<T>(m);
    moments.v[i] = static_cast<T>(v);
    const double m_hat = m / m_correction;
    const double v_hat = v / v_correction;
    const double theta = param[i];
    param[i] = static_cast<T>(
        theta - lr * (m_hat / (std::sqrt(v_hat) + config.epsilon) +
                      decay * theta));
  }
}

template <typename T>
void AdamStep(ParamStore<T>& params, AdamState<T>& state,
              const AdamConfig& config,
              const std::function<double(const Parameter<T>&)>& lr_for) {
  for (const auto& p : params.entries()) {
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
    }
  }
  for (const auto& p : params.entries()) {
    ad::Tensor<T> tensor = p.tensor;
    std::vector<T> zeros;
    std::span<const T> grad = tensor.grad();
    if (grad.empty()) {
      zeros.assign(static_cast<size_t>(tensor.numel()), T(0));
      grad = zeros;
    }
    AdamUpdate<T>(tensor.data(), grad, state.moments[p.name], state.step,
                  lr_for(p), config, p.apply_weight_decay);
  }
  ++state.step;
}

void LinearSchedule::Validate() const {
  if (warmup_steps < 0 || warmup_steps > total_steps) {
    throw std::invalid_argument("schedule needs 0 <= warmup_steps <= total_steps");
  }
}

double LinearSchedule::At(int64_t step) const {
  if (step > total_steps) {
    std::cerr << "warning: step " << step << " beyond schedule end "
              << total_steps << ", learning rate clamped to 0\n";
    return 0.0;
  }
  if (step < 0) return 0.0;
  if (warmup_steps > 0 && step <= warmup_steps) {
    return base_lr * static_cast<double>(step) /
           static_cast<double>(warmup_steps);
  }
  const int64_t span = total_steps - warmup_steps;
  if (span <= 0) return 0.0;
  return base_lr * static_cast<double>(total_steps - step) /
         static_cast<double>(span);
}

double LayerwiseMultiplier(int depth, double decay, int num_layers) {
  if (depth <= 0) return std::pow(decay, num_layers + 1);
  if (depth > num_layers) return 1.0;
  return std::pow(decay, num_layers - depth);
}

std::vector<double> LayerwiseLrs(double base_lr, double decay, int num_layers) {
  if (!(decay > 0.0 && decay <= 1.0)) {
    throw std::invalid_argument("layerwise decay must be in (0, 1]");
  }
  std::vector<double> lrs;
  lrs.reserve(static_cast<size_t>(num_layers) + 2);
  for (int depth = 0; depth <= num_layers + 1; ++depth) {
    lrs.push_back(base_lr * LayerwiseMultiplier(depth, decay, num_layers));
  }
  return lrs;
}

template void AdamUpdate<float>(std::span<float>, std::span<const float>,
                                AdamMoments<float>&, int64_t, double,
                                const AdamConfig&, bool);
template void AdamUpdate<double>(std::span<double>, std::span<const double>,
                                 AdamMoments<double>&, int64_t, double,
                                 const AdamConfig&, bool);
template void AdamStep<float>(
    ParamStore<float>&, AdamState<float>&, const AdamConfig&,
    const std::function<double(const Parameter<float>&)>&);
template void AdamStep<double>(
    ParamStore<double>&, AdamState<double>&, const AdamConfig&,
    const std::function<double(const Parameter<double>&)>&);

}  // namespace biortd
