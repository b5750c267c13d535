#pragma once

#include <cmath>
#include <concepts>

#include "cain/rng.h"
#include "cain/tensor.h"

namespace cain {

template <typename T = float>
  requires std::floating_point<T>
Tensor<T> randt(Rng& rng, Shape d, T lo = T(-1), T hi = T(1)) {
  return Tensor<T>::uniform(std::move(d), rng, lo, hi);
}

// ‖a − b‖₂ / (‖b‖₂ + eps)
template <typename T>
double norm_rel_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double dd = 0, nb = 0;
  auto pa = a.data();
  auto pb = b.data();
  for (size_t i = 0; i < pa.size(); ++i) {
    double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    dd += d * d;
    nb += static_cast<double>(pb[i]) * static_cast<double>(pb[i]);
  }
  return std::sqrt(dd) / (std::sqrt(nb) + 1e-30);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  auto pa = a.data();
  auto pb = b.data();
  for (size_t i = 0; i < pa.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(pa[i]) -
                             static_cast<double>(pb[i])));
  return m;
}

}  // namespace cain
