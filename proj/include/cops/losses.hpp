#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "cops/autodiff.hpp"
#include "cops/corpus.hpp"
#include "cops/error.hpp"
#include "cops/rng.hpp"
#include "cops/tensor.hpp"

namespace cops {

/// Multiplicative is z = mu + exp(log_sigma) * eps. Additive is the literal
/// z = mu + exp(log_sigma) + eps, kept for comparison runs.
enum class SamplingMode { Multiplicative, Additive };

template <typename S>
struct LatentSample {
  Tensor<S> mu;
  Tensor<S> log_sigma;
  Tensor<S> z;
  Tensor<S> eps;
};

/// Inference returns z = mu with eps = 0.
template <typename S>
LatentSample<S> sample_latent(const Tensor<S>& mu, const Tensor<S>& log_sigma, RngStream& rng, bool training,
                              SamplingMode mode = SamplingMode::Multiplicative) {
  require(mu.same_shape(log_sigma), ErrorCode::ShapeMismatch, "mu and log_sigma shapes differ");
  LatentSample<S> s{mu, log_sigma, mu, Tensor<S>(mu.shape())};
  if (!training) return s;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const S e = static_cast<S>(rng.normal());
    s.eps[i] = e;
    s.z[i] = mode == SamplingMode::Multiplicative ? mu[i] + std::exp(log_sigma[i]) * e
                                                  : mu[i] + std::exp(log_sigma[i]) + e;
  }
  return s;
}

/// sum_i exp(ls_i) + mu_i^2 - ls_i - 1, without the conventional 1/2.
template <typename S>
double kl_term(const Tensor<S>& mu, const Tensor<S>& log_sigma) {
  require(mu.same_shape(log_sigma), ErrorCode::ShapeMismatch, "mu and log_sigma shapes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu[i], ls = log_sigma[i];
    total += std::exp(ls) + m * m - ls - 1.0;
  }
  return total;
}

template <typename S>
double reconstruction_mse(const Tensor<S>& x, const Tensor<S>& x_hat) {
  require(x.same_shape(x_hat), ErrorCode::ShapeMismatch,
          "reconstruction shapes differ: " + shape_string(x.shape()) + " vs " + shape_string(x_hat.shape()));
  require(!x.empty(), ErrorCode::InvalidArgument, "reconstruction of an empty tensor");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(x_hat[i]);
    total += d * d;
  }
  return total / static_cast<double>(x.size());
}

inline void require_beta_vae(double beta) {
  require(beta > 1.0, ErrorCode::InvalidConfig, "beta must be greater than 1, got " + std::to_string(beta));
}

inline double generation_loss(double recon, double kl, double beta) {
  require_beta_vae(beta);
  return recon + beta * kl;
}

inline double cross_entropy(double p) { return -std::log(std::max(p, ad::kProbFloor)); }

/// CE + beta * kl + weight(label) * CE.
inline double classification_loss(std::span<const double> pred, Label label, Task task, const ClassWeights& weights,
                                  double kl, double beta) {
  const auto idx = label_index(label);
  require(task_of(label) == task && idx < pred.size(), ErrorCode::ForeignLabel,
          "label " + std::string(label_name(label)) + " outside the prediction vector");
  const double ce = cross_entropy(pred[idx]);
  return ce + beta * kl + weights[label] * ce;
}

}  // namespace cops
