#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "cops/autodiff.hpp"
#include "cops/layers.hpp"
#include "cops/tensor.hpp"

namespace cops {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "param[index]" of the largest error

  bool passed(double tol) const { return checked > 0 && max_rel_error < tol; }
};

/// |g - r| / max(1e-6, |g| + |r|)
inline double grad_rel_error(double g, double r) {
  return std::abs(g - r) / std::max(1e-6, std::abs(g) + std::abs(r));
}

/// Compares analytic gradients computed in scalar type S against central
/// finite differences evaluated in double. `loss` is a generic callable
/// `(ad::Tape<T>&, ParamBinder<T>&) -> ad::Var` returning a scalar; it must be
/// deterministic (reseed any dropout stream inside it).
template <typename S, typename F>
GradCheckResult grad_check(F&& loss, const ParameterStore<double>& point, double step = 1e-3) {
  ParameterStore<S> analytic;
  for (const auto& p : point) analytic[analytic.add(p.name, p.value.shape())].value = p.value.template cast<S>();
  {
    ad::Tape<S> tape(false);
    ParamBinder<S> bind(tape, analytic);
    tape.backward(loss(tape, bind));
  }

  ParameterStore<double> probe = point;
  const auto eval = [&]() {
    ad::Tape<double> tape(false);
    ParamBinder<double> bind(tape, static_cast<const ParameterStore<double>&>(probe));
    return tape.value(loss(tape, bind))[0];
  };

  GradCheckResult result;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    auto& v = probe[i].value;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double orig = v[k];
      v[k] = orig + step;
      const double up = eval();
      v[k] = orig - step;
      const double down = eval();
      v[k] = orig;
      const double err = grad_rel_error(static_cast<double>(analytic[i].grad[k]), (up - down) / (2.0 * step));
      ++result.checked;
      if (err > result.max_rel_error || result.worst.empty()) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        if (err >= result.max_rel_error) result.worst = probe[i].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return result;
}

}  // namespace cops
