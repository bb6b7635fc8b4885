#include "rbclab/autodiff/adam.hpp"

#include <cmath>

#include "rbclab/errors.hpp"

namespace rbclab::autodiff {

AdamState adam_init(const std::vector<Tensor>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), 0.0);
    s.v.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::vector<Tensor>& params,
               const std::vector<std::span<const double>>& grads, AdamState& state,
               double lr) {
  if (params.size() != state.m.size() || params.size() != grads.size()) {
    throw UsageError("adam_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads vs state of " +
                     std::to_string(state.m.size()));
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto pv = params[i].values();
    const auto g = grads[i];
    if (g.size() != pv.size()) {
      throw UsageError("adam_step: gradient " + std::to_string(i) + " has " +
                       std::to_string(g.size()) + " entries, parameter has " +
                       std::to_string(pv.size()));
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < pv.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      pv[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
  std::vector<std::span<const double>> grads;
  grads.reserve(params.size());
  for (auto& p : params) grads.push_back(p.grad());
  adam_step(params, grads, state, lr);
}

}  // namespace rbclab::autodiff
