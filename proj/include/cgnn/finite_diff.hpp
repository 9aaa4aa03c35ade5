#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "cgnn/tensor.hpp"

namespace cgnn {

// Central-difference gradient estimate of a scalar function over named
// tensors. Deliberately knows nothing about tapes: it only calls the
// forward function, so it can serve as an independent check on any
// reverse-mode result.
template <class Real>
std::map<std::string, Tensor<Real>> finite_difference_gradient(
    const std::function<Real(const std::map<std::string, Tensor<Real>>&)>& f,
    std::map<std::string, Tensor<Real>> point, Real eps) {
  std::map<std::string, Tensor<Real>> grads;
  for (auto& [name, t] : point) {
    Tensor<Real> g(t.shape());
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      const Real saved = t[i];
      t[i] = saved + eps;
      const Real up = f(point);
      t[i] = saved - eps;
      const Real down = f(point);
      t[i] = saved;
      g[i] = (up - down) / (Real(2) * eps);
    }
    grads[name] = std::move(g);
  }
  return grads;
}

// Relative error used throughout gradient verification.
template <class Real>
Real relative_error(Real a, Real b) {
  const Real denom = std::max(Real(1e-8), std::abs(a) + std::abs(b));
  return std::abs(a - b) / denom;
}

template <class Real>
Real max_relative_error(const Tensor<Real>& a, const Tensor<Real>& b) {
  Real worst = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, relative_error(a[i], b[i]));
  return worst;
}

// Largest discrepancy measured against the pair's overall gradient scale.
// Elementwise comparison is the sharper check for single primitives, but on
// a whole model the components near a zero crossing carry less signal than
// the differencing noise of the probe itself, so deep-path tensors are
// compared at tensor granularity instead.
template <class Real>
Real normwise_relative_error(const Tensor<Real>& a, const Tensor<Real>& b) {
  Real num = 0, scale_a = 0, scale_b = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    scale_a = std::max(scale_a, std::abs(a[i]));
    scale_b = std::max(scale_b, std::abs(b[i]));
  }
  return num / std::max(Real(1e-8), scale_a + scale_b);
}

}  // namespace cgnn
