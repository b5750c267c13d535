#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cain/tensor.h"

namespace cain {

// One recorded primitive application. backward maps the output gradient to
// per-input gradient contributions, aligned with `inputs`; entries may be
// undefined for inputs that receive no gradient (constants).
template <typename T>
struct TapeEntry {
  const char* op;
  Tensor<T> output;
  std::vector<Tensor<T>> inputs;
  std::function<std::vector<Tensor<T>>(const Tensor<T>&)> backward;
};

// Ordered record of primitive applications. Creation order is a topological
// order, so reverse iteration is a valid backward schedule.
template <typename T>
class Tape {
 public:
  static Tape*& active() {
    static thread_local Tape* current = nullptr;
    return current;
  }

  size_t size() const { return entries_.size(); }
  const TapeEntry<T>& entry(size_t i) const { return entries_[i]; }

  void record(TapeEntry<T> e) { entries_.push_back(std::move(e)); }

  void clear() { entries_.clear(); }

 private:
  std::vector<TapeEntry<T>> entries_;
};

// RAII: makes a fresh tape active for the enclosed computation.
template <typename T>
class TapeScope {
 public:
  TapeScope() : prev_(Tape<T>::active()) { Tape<T>::active() = &tape_; }
  ~TapeScope() { Tape<T>::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  Tape<T>& tape() { return tape_; }

 private:
  Tape<T> tape_;
  Tape<T>* prev_;
};

// RAII: suspends recording (ops compute values only).
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : prev_(Tape<T>::active()) { Tape<T>::active() = nullptr; }
  ~NoGradScope() { Tape<T>::active() = prev_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* prev_;
};

template <typename T>
bool recording() {
  return Tape<T>::active() != nullptr;
}

// Finalizes an op result: records the application when a tape is active and
// any input carries gradient, in which case the output does too.
template <typename T, typename BackwardFn>
Tensor<T> record_op(const char* name, std::vector<Tensor<T>> inputs,
                    Tensor<T> out, BackwardFn&& backward) {
  debug_check_finite(out, name);
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return out;
  bool needs_grad = false;
  for (const auto& in : inputs)
    if (in.requires_grad()) needs_grad = true;
  if (!needs_grad) return out;
  out.set_requires_grad(true);
  tape->record(TapeEntry<T>{name, out, std::move(inputs),
                            std::forward<BackwardFn>(backward)});
  return out;
}

namespace detail {

// Same-shape addition used for gradient accumulation. Recorded like any op,
// which is what lets a second backward differentiate through the first.
template <typename T>
Tensor<T> engine_add(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.dims() == b.dims(), "gradient accumulation: shape mismatch " +
                                  shape_str(a.dims()) + " vs " +
                                  shape_str(b.dims()));
  Tensor<T> out = Tensor<T>::zeros(a.dims());
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] + pb[i];
  return record_op<T>(
      "accum_add", {a, b}, std::move(out),
      [](const Tensor<T>& g) { return std::vector<Tensor<T>>{g, g}; });
}

template <typename T>
struct BackwardState {
  std::unordered_map<Node<T>*, Tensor<T>> pending;
  std::unordered_set<Node<T>*> produced;
};

// Reverse sweep over the active tape from `root`. With create_graph the
// backward rules run with recording enabled, so the computed gradients are
// themselves differentiable.
template <typename T>
BackwardState<T> run_backward(const Tensor<T>& root, bool create_graph) {
  check(root.numel() == 1,
        "backward: root must be scalar, dims " + shape_str(root.dims()));
  Tape<T>* tape = Tape<T>::active();
  check(tape != nullptr, "backward: no active tape");

  BackwardState<T> st;
  st.pending.emplace(root.node(), Tensor<T>::ones(root.dims()));

  size_t limit = tape->size();
  auto sweep = [&]() {
    for (size_t i = limit; i-- > 0;) {
      // copy: the backward call may append to the tape (create_graph) and
      // reallocate the entry storage under a reference
      TapeEntry<T> e = tape->entry(i);
      st.produced.insert(e.output.node());
      auto it = st.pending.find(e.output.node());
      if (it == st.pending.end()) continue;
      Tensor<T> gout = it->second;
      std::vector<Tensor<T>> gins = e.backward(gout);
      check(gins.size() == e.inputs.size(),
            std::string("backward rule of ") + e.op +
                ": wrong gradient count");
      for (size_t j = 0; j < gins.size(); ++j) {
        if (!gins[j].defined()) continue;
        if (!e.inputs[j].requires_grad()) continue;
        check(gins[j].dims() == e.inputs[j].dims(),
              std::string("backward rule of ") + e.op + ": gradient dims " +
                  shape_str(gins[j].dims()) + " vs input " +
                  shape_str(e.inputs[j].dims()));
        Node<T>* node = e.inputs[j].node();
        auto p = st.pending.find(node);
        if (p == st.pending.end())
          st.pending.emplace(node, gins[j]);
        else
          p->second = engine_add(p->second, gins[j]);
      }
    }
  };

  if (create_graph) {
    sweep();
  } else {
    NoGradScope<T> guard;
    sweep();
  }
  return st;
}

}  // namespace detail

// Accumulates d(root)/d(leaf) into the .grad of every reachable leaf that
// requires gradient. Repeated calls keep accumulating.
template <typename T>
void backward(const Tensor<T>& root) {
  auto st = detail::run_backward(root, /*create_graph=*/false);
  for (auto& [node, g] : st.pending) {
    if (!node->requires_grad) continue;
    if (st.produced.count(node)) continue;  // interior value, not a leaf
    if (node->grad.empty()) node->grad.assign(node->values.size(), T(0));
    const T* pg = g.ptr();
    for (size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += pg[i];
  }
}

// Returns d(root)/d(wrt_i) as tensors. With create_graph=true the results
// stay connected to the tape and can be differentiated again.
template <typename T>
std::vector<Tensor<T>> grad(const Tensor<T>& root,
                            const std::vector<Tensor<T>>& wrt,
                            bool create_graph = false) {
  auto st = detail::run_backward(root, create_graph);
  std::vector<Tensor<T>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = st.pending.find(w.node());
    if (it == st.pending.end())
      out.push_back(Tensor<T>::zeros(w.dims()));
    else
      out.push_back(it->second);
  }
  return out;
}

}  // namespace cain
