#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cops/autodiff.hpp"
#include "cops/rng.hpp"
#include "cops/tensor.hpp"

namespace cops {

enum class Activation { Identity, Relu, Tanh };

struct EmbeddingLayer {
  std::size_t table = 0;
};

struct DenseLayer {
  std::size_t w = 0;
  std::size_t b = 0;
  Activation activation = Activation::Identity;
};

struct LstmLayer {
  std::size_t wx = 0;
  std::size_t wh = 0;
  std::size_t b = 0;
};

struct BiLstmLayer {
  LstmLayer forward;
  LstmLayer backward;
};

/// Resolves parameter indices to tape leaves, once per tape. A binder over a
/// const store produces read-only leaves for inference.
template <typename S>
class ParamBinder {
 public:
  ParamBinder(ad::Tape<S>& tape, ParameterStore<S>& store)
      : tape_(tape), mutable_(&store), store_(&store), leaves_(store.size()) {}
  ParamBinder(ad::Tape<S>& tape, const ParameterStore<S>& store)
      : tape_(tape), store_(&store), leaves_(store.size()) {}

  ad::Var operator()(std::size_t index) {
    auto& leaf = leaves_.at(index);
    if (!leaf) leaf = mutable_ ? tape_.parameter((*mutable_)[index]) : tape_.frozen((*store_)[index]);
    return *leaf;
  }

  ad::Tape<S>& tape() { return tape_; }
  const ParameterStore<S>& store() const { return *store_; }

 private:
  ad::Tape<S>& tape_;
  ParameterStore<S>* mutable_ = nullptr;
  const ParameterStore<S>* store_;
  std::vector<std::optional<ad::Var>> leaves_;
};

template <typename S>
EmbeddingLayer make_embedding(ParameterStore<S>& store, const std::string& name, std::size_t vocab,
                              std::size_t dim, RngStream& rng) {
  const auto idx = store.add(name, {vocab, dim});
  auto& v = store[idx].value;
  for (std::size_t i = dim; i < v.size(); ++i) v[i] = static_cast<S>(rng.uniform(-0.05, 0.05));
  return {idx};
}

/// Glorot-uniform kernel, zero bias.
template <typename S>
DenseLayer make_dense(ParameterStore<S>& store, const std::string& name, std::size_t in, std::size_t out,
                      Activation act, RngStream& rng) {
  DenseLayer layer{store.add(name + ".w", {in, out}), store.add(name + ".b", {out}), act};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& x : store[layer.w].value.values()) x = static_cast<S>(rng.uniform(-limit, limit));
  return layer;
}

/// Kernels uniform(-k, k) with k = 1/sqrt(hidden); forget-gate bias 1.
template <typename S>
LstmLayer make_lstm(ParameterStore<S>& store, const std::string& name, std::size_t in, std::size_t hidden,
                    RngStream& rng) {
  LstmLayer layer{store.add(name + ".wx", {in, 4 * hidden}), store.add(name + ".wh", {hidden, 4 * hidden}),
                  store.add(name + ".b", {4 * hidden})};
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& x : store[layer.wx].value.values()) x = static_cast<S>(rng.uniform(-k, k));
  for (auto& x : store[layer.wh].value.values()) x = static_cast<S>(rng.uniform(-k, k));
  auto& b = store[layer.b].value;
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = S(1);
  return layer;
}

template <typename S>
BiLstmLayer make_bilstm(ParameterStore<S>& store, const std::string& name, std::size_t in, std::size_t hidden,
                        RngStream& rng) {
  auto fwd = make_lstm(store, name + ".fwd", in, hidden, rng);
  auto bwd = make_lstm(store, name + ".bwd", in, hidden, rng);
  return {fwd, bwd};
}

template <typename S>
ad::Var embedding_forward(ParamBinder<S>& p, const EmbeddingLayer& layer, std::span<const std::uint32_t> ids,
                          std::size_t steps, std::size_t batch) {
  return ad::embedding(p.tape(), p(layer.table), ids, steps, batch);
}

template <typename S>
ad::Var dense_forward(ParamBinder<S>& p, const DenseLayer& layer, ad::Var x) {
  auto& t = p.tape();
  auto y = ad::add_bias(t, ad::matmul(t, x, p(layer.w)), p(layer.b));
  switch (layer.activation) {
    case Activation::Relu: return ad::relu(t, y);
    case Activation::Tanh: return ad::tanh(t, y);
    case Activation::Identity: break;
  }
  return y;
}

template <typename S>
ad::Var lstm_forward(ParamBinder<S>& p, const LstmLayer& layer, ad::Var x,
                     std::shared_ptr<const Tensor<S>> mask, bool return_sequence, bool reverse = false) {
  return ad::lstm(p.tape(), x, std::move(mask), p(layer.wx), p(layer.wh), p(layer.b), reverse, return_sequence);
}

/// Forward final state || backward (reversed input) final state -> [B, 2H].
template <typename S>
ad::Var bilstm_forward(ParamBinder<S>& p, const BiLstmLayer& layer, ad::Var x,
                       std::shared_ptr<const Tensor<S>> mask) {
  auto f = lstm_forward(p, layer.forward, x, mask, false, false);
  auto b = lstm_forward(p, layer.backward, x, mask, false, true);
  return ad::concat_last(p.tape(), f, b);
}

/// Plain-tensor softmax over the last axis.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
  ad::Tape<S> tape(false);
  return tape.value(ad::softmax(tape, tape.constant(x)));
}

template <typename S>
Tensor<S> dropout_apply(const Tensor<S>& x, double rate, RngStream& rng, bool training) {
  ad::Tape<S> tape(false);
  return tape.value(ad::dropout(tape, tape.constant(x), rate, rng, training));
}

}  // namespace cops
