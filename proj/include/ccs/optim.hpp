#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ccs/errors.hpp"
#include "ccs/nn.hpp"

namespace ccs {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update over every parameter in `params`.
/// Throws TrainingError naming the first parameter with a non-finite gradient;
/// in that case nothing is modified.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, const AdamConfig& cfg) {
  auto& items = params.items();
  if (state.m.empty()) {
    for (const auto& p : items) {
      state.m.emplace_back(p.tensor.size(), T(0));
      state.v.emplace_back(p.tensor.size(), T(0));
    }
  }
  if (state.m.size() != items.size()) {
    throw DimensionError("adam state tracks " + std::to_string(state.m.size()) +
                         " parameters, model has " + std::to_string(items.size()));
  }
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (state.m[k].size() != items[k].tensor.size()) {
      throw DimensionError("adam moment shape mismatch for " + items[k].name);
    }
    if (!items[k].tensor.has_grad()) continue;
    for (T g : items[k].tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw TrainingError("non-finite gradient in parameter " + items[k].name);
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < items.size(); ++k) {
    auto& tensor = items[k].tensor;
    if (!tensor.has_grad()) continue;
    auto w = tensor.mutable_data();
    const auto g = tensor.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<T>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi);
      v[i] = static_cast<T>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = static_cast<T>(w[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params.items()) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto& p : params.items()) {
      if (!p.tensor.has_grad()) continue;
      for (auto& g : p.tensor.mutable_grad()) g *= f;
    }
  }
  return norm;
}

}  // namespace ccs
