#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "geomae/autodiff.hpp"
#include "geomae/rng.hpp"

namespace geomae::test {

inline Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(s));
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

/// Central finite differences of a scalar-valued rebuild function with
/// respect to one input tensor, compared against the reverse-mode gradient.
/// Returns the maximum relative error over all elements.
inline double grad_check(const std::function<Var(const Var&)>& f, const Tensor& x0,
                         double h = 1e-6) {
  Var x = make_var(x0, true);
  Var loss = f(x);
  backward(loss);
  Tensor analytic = x->grad;

  double max_rel = 0.0;
  for (Index i = 0; i < x0.numel(); ++i) {
    Tensor xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const double lp = f(make_var(xp, false))->val[0];
    const double lm = f(make_var(xm, false))->val[0];
    const double numeric = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
    max_rel = std::max(max_rel, std::abs(numeric - analytic[i]) / denom);
  }
  return max_rel;
}

inline bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  for (Index i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (Index i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace geomae::test
