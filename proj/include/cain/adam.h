#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "cain/tensor.h"

namespace cain {

// Adam over a fixed list of named leaf tensors. step() consumes whatever is
// in each parameter's gradient slot (absent = zero), updates values in
// place, and clears the slots. Moments are exposed by name so checkpoints
// can carry optimizer state.
template <typename T>
class Adam {
 public:
  struct Slot {
    std::string name;
    Tensor<T> p, m, v;
  };

  Adam(const std::vector<std::pair<std::string, Tensor<T>>>& params,
       double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    check(lr > 0 && eps > 0, "Adam: lr and eps must be positive");
    check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1,
          "Adam: moment decays must lie in [0,1)");
    slots_.reserve(params.size());
    for (const auto& [name, p] : params) {
      Slot s;
      s.name = name;
      s.p = p;
      s.m = Tensor<T>::zeros(p.dims());
      s.v = Tensor<T>::zeros(p.dims());
      slots_.push_back(std::move(s));
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Slot& s : slots_) {
      int64_t n = s.p.numel();
      T* pv = s.p.ptr();
      T* pm = s.m.ptr();
      T* pvv = s.v.ptr();
      if (s.p.has_grad()) {
        std::span<const T> g = s.p.grad_data();
        for (int64_t i = 0; i < n; ++i) {
          double gi = static_cast<double>(g[i]);
          double m = beta1_ * pm[i] + (1.0 - beta1_) * gi;
          double v = beta2_ * pvv[i] + (1.0 - beta2_) * gi * gi;
          pm[i] = static_cast<T>(m);
          pvv[i] = static_cast<T>(v);
          pv[i] -= static_cast<T>(lr_ * (m / bc1) /
                                  (std::sqrt(v / bc2) + eps_));
        }
      } else {
        for (int64_t i = 0; i < n; ++i) {
          double m = beta1_ * pm[i];
          double v = beta2_ * pvv[i];
          pm[i] = static_cast<T>(m);
          pvv[i] = static_cast<T>(v);
          pv[i] -= static_cast<T>(lr_ * (m / bc1) /
                                  (std::sqrt(v / bc2) + eps_));
        }
      }
      s.p.zero_grad();
    }
  }

  void zero_grads() {
    for (Slot& s : slots_) s.p.zero_grad();
  }

  int64_t steps_taken() const { return t_; }
  void set_steps_taken(int64_t t) {
    check(t >= 0, "Adam: negative step count");
    t_ = t;
  }

  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace cain
