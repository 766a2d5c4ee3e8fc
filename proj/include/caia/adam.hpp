#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "caia/param_store.hpp"

namespace caia {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied as value -= lr * wd * value
};

/// Moment buffers are created lazily (zero-initialized) on first update.
struct AdamState {
  std::uint64_t step_count = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One bias-corrected Adam update over every trainable entry, in name order.
/// Gradients are zeroed afterwards.
inline void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg) {
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  store.for_each([&](const std::string& name, ParamEntry& e) {
    if (!e.trainable) return;
    Tensor& m = state.first_moment.try_emplace(name, Tensor(e.value.shape(), 0.0)).first->second;
    Tensor& v = state.second_moment.try_emplace(name, Tensor(e.value.shape(), 0.0)).first->second;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      e.value[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * e.value[i]);
    }
  });
  store.zero_grads();
}

}  // namespace caia
