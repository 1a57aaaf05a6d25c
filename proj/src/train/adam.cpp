// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "dmla/training.hpp"

namespace dmla {

AdamState AdamState::for_parameters(const std::vector<NamedTensor>& params) {
  AdamState s;
  for (const NamedTensor& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<NamedTensor>& params, const std::vector<std::vector<double>>& grads, AdamState& state,
               double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " parameters but " +
                                std::to_string(grads.size()) + " gradients and " + std::to_string(state.m.size()) +
                                " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].tensor.numel();
    if (grads[i].size() != n || state.m[i].size() != n || state.v[i].size() != n) {
      throw std::invalid_argument("adam_step: shape mismatch for '" + params[i].name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor param = params[i].tensor;
    std::span<double> w = param.mutable_data();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    const std::vector<double>& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = AdamState::kBeta1 * m[j] + (1.0 - AdamState::kBeta1) * g[j];
      v[j] = AdamState::kBeta2 * v[j] + (1.0 - AdamState::kBeta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + AdamState::kEpsilon);
    }
  }
}

}  // namespace dmla
