#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cops/error.hpp"
#include "cops/tensor.hpp"

namespace cops {

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;
};

namespace detail {
template <typename S>
void ensure_moments(std::vector<Tensor<float>>& moments, const ParameterStore<S>& params) {
  if (moments.empty()) {
    for (const auto& p : params) moments.emplace_back(p.value.shape());
  }
  require(moments.size() == params.size(), ErrorCode::ShapeMismatch, "Adam moment count != parameter count");
}
}  // namespace detail

/// One Adam update with bias correction. Gradients are left in place;
/// zeroing them is the caller's job.
template <typename S>
void adam_step(ParameterStore<S>& params, AdamState& state) {
  detail::ensure_moments(state.m, params);
  detail::ensure_moments(state.v, params);
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    require(m.shape() == p.grad.shape() && v.shape() == p.grad.shape() && p.grad.same_shape(p.value), ErrorCode::ShapeMismatch,
            "Adam moment/grad shape mismatch for " + p.name);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = static_cast<double>(p.grad[k]);
      const double mk = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      const double vk = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = state.lr * (mk / bc1) / (std::sqrt(vk / bc2) + state.eps);
      p.value[k] = static_cast<S>(static_cast<double>(p.value[k]) - update);
    }
  }
}

template <typename S>
double global_grad_norm(const ParameterStore<S>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (S g : p.grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
template <typename S>
double clip_grad_norm(ParameterStore<S>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto factor = static_cast<S>(max_norm / norm);
    for (auto& p : params) {
      for (auto& g : p.grad.values()) g *= factor;
    }
  }
  return norm;
}

}  // namespace cops
