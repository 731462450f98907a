#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mifruit/blocks.hpp"
#include "mifruit/error.hpp"

namespace mifruit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    require(lr > 0.0 && std::isfinite(lr), "adam: learning rate must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0, "adam: beta1 must lie in [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, "adam: beta2 must lie in [0, 1)");
    require(eps > 0.0, "adam: eps must be positive");
  }
};

/// First and second moments per parameter tensor, plus the step counter.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(const std::vector<std::size_t>& sizes) {
    for (auto n : sizes) {
      m.emplace_back(n, T(0));
      v.emplace_back(n, T(0));
    }
  }
};

template <typename T>
AdamState<T> make_adam_state(const ParameterSet<T>& ps) {
  std::vector<std::size_t> sizes;
  for (const auto& p : ps.params()) sizes.push_back(p.tensor.numel());
  return AdamState<T>(sizes);
}

/// One bias-corrected Adam update over matching parameter/gradient spans.
/// Every gradient is checked before any parameter changes.
template <typename T>
void adam_step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  cfg.validate();
  require(params.size() == grads.size() && params.size() == state.m.size(),
          "adam_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].size() == grads[i].size() && params[i].size() == state.m[i].size(),
            "adam_step: shape mismatch for parameter " + std::to_string(i));
    for (T g : grads[i])
      if (!std::isfinite(g)) fail(ErrorKind::numeric_failure, "adam_step: non-finite gradient in parameter " +
                                                                  std::to_string(i));
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const T g = grads[i][j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const T mhat = m[j] / c1, vhat = v[j] / c2;
      params[i][j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

/// Applies adam_step to every trainable tensor of a parameter set. A tensor
/// that received no gradient this step is treated as having gradient zero.
template <typename T>
void adam_step(ParameterSet<T>& ps, AdamState<T>& state, const AdamConfig& cfg) {
  std::vector<std::vector<T>> zeros;
  zeros.reserve(ps.params().size());
  std::vector<std::span<T>> params;
  std::vector<std::span<const T>> grads;
  for (const auto& p : ps.params()) {
    auto t = p.tensor;
    params.push_back(t.data());
    if (t.has_grad()) {
      grads.push_back(t.grad());
    } else {
      zeros.emplace_back(t.numel(), T(0));
      grads.push_back(zeros.back());
    }
  }
  adam_step<T>(params, grads, state, cfg);
}

}  // namespace mifruit
