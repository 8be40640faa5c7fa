#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "semisfl/tensor.hpp"

namespace semisfl {

/// Classical momentum: m <- beta * m + g; w <- w - lr * m.
struct OptimizerState {
  std::vector<Tensor> momentum;
  double beta = 0.9;
  double lr = 0.02;

  OptimizerState() = default;

  OptimizerState(const std::vector<Tensor>& params, double beta_, double lr_) : beta(beta_), lr(lr_) {
    if (!(beta >= 0.0 && beta < 1.0)) throw ContractError("momentum coefficient must lie in [0, 1)");
    momentum.reserve(params.size());
    for (const auto& p : params) momentum.push_back(p.zeros_like());
  }
};

inline void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.momentum.size())
    throw ContractError("sgd_step: parameter, gradient and momentum lists differ in length");
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& w = params[t].values;
    const auto& g = grads[t].values;
    auto& m = state.momentum[t].values;
    if (w.size() != g.size() || w.size() != m.size())
      throw ContractError("sgd_step: shape mismatch at tensor " + std::to_string(t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta * m[i] + g[i];
      w[i] -= state.lr * m[i];
    }
  }
}

struct LrSchedule {
  double base = 0.02;
  int horizon = 1;
  double floor = 0.0;
};

/// lr_h = floor + (base - floor) * (1 + cos(pi h / H)) / 2, for 0 <= h <= H.
inline double cosine_lr(int h, const LrSchedule& s) {
  if (s.horizon < 1) throw ContractError("cosine_lr: horizon must be >= 1");
  if (h < 0 || h > s.horizon)
    throw ContractError("cosine_lr: round " + std::to_string(h) + " outside [0, " + std::to_string(s.horizon) + "]");
  if (s.floor < 0.0 || s.floor > s.base) throw ContractError("cosine_lr: need 0 <= floor <= base");
  const double c = std::cos(std::numbers::pi * double(h) / double(s.horizon));
  return s.floor + (s.base - s.floor) * (1.0 + c) / 2.0;
}

}  // namespace semisfl
