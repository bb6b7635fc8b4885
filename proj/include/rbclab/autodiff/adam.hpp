#pragma once

#include <span>
#include <vector>

#include "rbclab/autodiff/tensor.hpp"

namespace rbclab::autodiff {

/// First/second-moment adaptive update with bias correction.
/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8 unless overridden.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState adam_init(const std::vector<Tensor>& params);

/// One update: params[i] -= lr * m_hat / (sqrt(v_hat) + eps), with grads
/// supplied explicitly (usually the params' own .grad() buffers).
void adam_step(std::vector<Tensor>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state,
               double lr);

/// Convenience form reading each parameter's accumulated gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

}  // namespace rbclab::autodiff
