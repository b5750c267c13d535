#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cain/common.h"
#include "cain/rng.h"

namespace cain {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& dims) {
  int64_t n = 1;
  for (int64_t d : dims) {
    check(d > 0, "shape dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ")";
  return os.str();
}

namespace detail {

template <typename T>
struct Node {
  Shape dims;
  std::vector<T> values;
  std::vector<T> grad;  // allocated on first accumulation into a leaf
  bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor with value-handle semantics: copies share storage.
// Gradients live beside the values and are filled in by backward().
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  static Tensor zeros(Shape dims) {
    Tensor t;
    t.node_ = std::make_shared<detail::Node<T>>();
    t.node_->values.assign(shape_numel(dims), T(0));
    t.node_->dims = std::move(dims);
    return t;
  }

  static Tensor full(Shape dims, T value) {
    Tensor t = zeros(std::move(dims));
    for (T& v : t.node_->values) v = value;
    return t;
  }

  static Tensor ones(Shape dims) { return full(std::move(dims), T(1)); }

  static Tensor from(Shape dims, std::vector<T> values) {
    check(shape_numel(dims) == static_cast<int64_t>(values.size()),
          "Tensor::from: value count does not match shape " + shape_str(dims));
    Tensor t;
    t.node_ = std::make_shared<detail::Node<T>>();
    t.node_->dims = std::move(dims);
    t.node_->values = std::move(values);
    return t;
  }

  static Tensor scalar(T value) { return full({1, 1, 1, 1}, value); }

  static Tensor uniform(Shape dims, Rng& rng, T lo, T hi) {
    Tensor t = zeros(std::move(dims));
    for (T& v : t.node_->values) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor normal(Shape dims, Rng& rng, T mean = T(0), T stddev = T(1)) {
    Tensor t = zeros(std::move(dims));
    for (T& v : t.node_->values) v = static_cast<T>(mean + stddev * rng.normal());
    return t;
  }

  bool defined() const { return node_ != nullptr; }

  const Shape& dims() const {
    check(defined(), "Tensor: undefined");
    return node_->dims;
  }

  int64_t dim(size_t i) const {
    check(i < dims().size(), "Tensor::dim: axis out of range");
    return node_->dims[i];
  }

  size_t rank() const { return dims().size(); }
  int64_t numel() const { return static_cast<int64_t>(node_->values.size()); }

  std::span<T> data() {
    check(defined(), "Tensor: undefined");
    return node_->values;
  }
  std::span<const T> data() const {
    check(defined(), "Tensor: undefined");
    return node_->values;
  }

  T* ptr() { return node_->values.data(); }
  const T* ptr() const { return node_->values.data(); }

  // Rank-4 element access (n, c, y, x).
  T& at(int64_t n, int64_t c, int64_t y, int64_t x) {
    const Shape& d = dims();
    check(d.size() == 4, "Tensor::at: rank-4 accessor on rank " +
                             std::to_string(d.size()) + " tensor");
    return node_->values[((n * d[1] + c) * d[2] + y) * d[3] + x];
  }
  T at(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return const_cast<Tensor*>(this)->at(n, c, y, x);
  }

  T item() const {
    check(numel() == 1, "Tensor::item: tensor is not scalar, dims " +
                            shape_str(dims()));
    return node_->values[0];
  }

  Tensor& set_requires_grad(bool on = true) {
    check(defined(), "Tensor: undefined");
    node_->requires_grad = on;
    return *this;
  }
  bool requires_grad() const { return defined() && node_->requires_grad; }

  bool has_grad() const { return defined() && !node_->grad.empty(); }

  std::span<const T> grad_data() const {
    check(has_grad(), "Tensor: no gradient accumulated");
    return node_->grad;
  }

  // Gradient as a plain tensor (zeros if backward never reached this leaf).
  Tensor grad() const {
    Tensor g = zeros(dims());
    if (has_grad()) g.node_->values = node_->grad;
    return g;
  }

  void zero_grad() {
    if (defined()) node_->grad.clear();
  }

  void accumulate_grad(std::span<const T> contribution) {
    check(static_cast<int64_t>(contribution.size()) == numel(),
          "Tensor::accumulate_grad: size mismatch");
    if (node_->grad.empty()) node_->grad.assign(numel(), T(0));
    for (int64_t i = 0; i < numel(); ++i) node_->grad[i] += contribution[i];
  }

  // Same values, fresh node detached from any recorded history.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<detail::Node<T>>();
    t.node_->dims = node_->dims;
    t.node_->values = node_->values;
    return t;
  }

  Tensor clone_values() const { return detach(); }

  detail::Node<T>* node() const { return node_.get(); }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
void debug_check_finite(const Tensor<T>& t, const char* op) {
  if (finite_checks() && !all_finite(t))
    throw Error(std::string("non-finite value produced by ") + op);
}

}  // namespace cain
