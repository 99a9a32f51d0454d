#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cops/error.hpp"

namespace cops {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major array. The last dimension is the "feature" axis that
/// matmul/bias/softmax act on; everything before it is flattened into rows.
template <typename S>
class Tensor {
 public:
  using value_type = S;

  Tensor() = default;
  explicit Tensor(Shape shape, S fill = S(0)) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_size(shape_), ErrorCode::ShapeMismatch,
            "data size " + std::to_string(data_.size()) + " does not match shape " + shape_string(shape_));
  }

  static Tensor vector(std::initializer_list<S> values) {
    return Tensor({values.size()}, std::vector<S>(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::span<S> values() { return data_; }
  std::span<const S> values() const { return data_; }
  std::vector<S>& storage() { return data_; }
  const std::vector<S>& storage() const { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }
  S& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const S& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(S(0)); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  Tensor reshaped(Shape shape) const {
    require(shape_size(shape) == size(), ErrorCode::ShapeMismatch,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  template <typename T>
  Tensor<T> cast() const {
    return Tensor<T>(shape_, std::vector<T>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<S> data_;
};

template <typename S>
bool all_finite(const Tensor<S>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](S v) { return std::isfinite(v); });
}

template <typename S>
void check_finite(const Tensor<S>& t, const char* where) {
  require(all_finite(t), ErrorCode::NonFinite, std::string("non-finite value produced by ") + where);
}

/// Trainable tensor with its gradient slot.
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;

  Parameter() = default;
  Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
};

/// Named parameters in insertion order; layers refer to them by index so a
/// store (and a model holding one) can be copied by value.
template <typename S>
class ParameterStore {
 public:
  std::size_t add(std::string name, Shape shape) {
    require(!find(name).has_value(), ErrorCode::InvalidArgument, "duplicate parameter name " + name);
    params_.emplace_back(std::move(name), std::move(shape));
    return params_.size() - 1;
  }

  Parameter<S>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return params_[i]; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    return std::nullopt;
  }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.zero();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  std::vector<Tensor<S>> snapshot() const {
    std::vector<Tensor<S>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value);
    return out;
  }

  void restore(const std::vector<Tensor<S>>& values) {
    require(values.size() == params_.size(), ErrorCode::ShapeMismatch, "snapshot parameter count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      require(values[i].same_shape(params_[i].value), ErrorCode::ShapeMismatch,
              "snapshot shape mismatch for " + params_[i].name);
      params_[i].value = values[i];
    }
  }

 private:
  std::vector<Parameter<S>> params_;
};

}  // namespace cops
