#pragma once

#include <cmath>
#include <functional>

#include <doctest.h>

#include "bta/random.hpp"
#include "bta/tensor.hpp"

namespace bta::test {

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0,
                                    bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Max elementwise relative error between backward() and central differences
/// of f with respect to x.
inline double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                         const Tensor<double>& x, double h = 1e-5) {
  x.node()->grad.clear();
  const auto y = f(x);
  backward(y);
  const auto analytic = x.grad_tensor();
  const auto numeric = finite_difference_gradient<double>(
      [&](const Tensor<double>& p) { return f(p).item(); }, x.detach(), h);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) worst = std::max(worst, rel_error(analytic.at(i), numeric.at(i)));
  return worst;
}

}  // namespace bta::test
