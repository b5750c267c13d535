#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cain/tape.h"
#include "cain/tensor.h"

namespace cain {

enum class PaddingMode { kZero, kReflect };

// ---------------------------------------------------------------------------
// Broadcasting: ranks must match; a dimension participates when the extents
// are equal or one of them is 1. No other broadcasting is supported.

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  check(a.size() == b.size(), "broadcast: rank mismatch " + shape_str(a) +
                                  " vs " + shape_str(b));
  Shape out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1)
      out[i] = a[i];
    else if (a[i] == 1)
      out[i] = b[i];
    else
      throw Error("broadcast: incompatible shapes " + shape_str(a) + " vs " +
                  shape_str(b));
  }
  return out;
}

namespace detail {

inline std::vector<int64_t> row_major_strides(const Shape& dims) {
  std::vector<int64_t> s(dims.size());
  int64_t acc = 1;
  for (size_t i = dims.size(); i-- > 0;) {
    s[i] = acc;
    acc *= dims[i];
  }
  return s;
}

// Strides for reading `dims` at positions of `out_dims`; broadcast axes get
// stride 0.
inline std::vector<int64_t> broadcast_strides(const Shape& dims,
                                              const Shape& out_dims) {
  auto s = row_major_strides(dims);
  for (size_t i = 0; i < dims.size(); ++i)
    if (dims[i] == 1 && out_dims[i] != 1) s[i] = 0;
  return s;
}

template <typename T, typename F>
void binary_kernel(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out,
                   F&& f) {
  const Shape& od = out.dims();
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  if (a.dims() == b.dims()) {
    int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return;
  }
  auto sa = broadcast_strides(a.dims(), od);
  auto sb = broadcast_strides(b.dims(), od);
  if (od.size() == 4) {
    int64_t k = 0;
    for (int64_t i0 = 0; i0 < od[0]; ++i0)
      for (int64_t i1 = 0; i1 < od[1]; ++i1)
        for (int64_t i2 = 0; i2 < od[2]; ++i2) {
          const T* ra = pa + i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
          const T* rb = pb + i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
          for (int64_t i3 = 0; i3 < od[3]; ++i3)
            po[k++] = f(ra[i3 * sa[3]], rb[i3 * sb[3]]);
        }
    return;
  }
  // generic odometer for other ranks
  std::vector<int64_t> idx(od.size(), 0);
  int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    int64_t oa = 0, ob = 0;
    for (size_t d = 0; d < od.size(); ++d) {
      oa += idx[d] * sa[d];
      ob += idx[d] * sb[d];
    }
    po[i] = f(pa[oa], pb[ob]);
    for (size_t d = od.size(); d-- > 0;) {
      if (++idx[d] < od[d]) break;
      idx[d] = 0;
    }
  }
}

template <typename T, typename F>
Tensor<T> unary_map(const Tensor<T>& x, F&& f) {
  Tensor<T> out = Tensor<T>::zeros(x.dims());
  const T* px = x.ptr();
  T* po = out.ptr();
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = f(px[i]);
  return out;
}

}  // namespace detail

// Forward declarations used inside backward rules.
template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, const std::vector<int>& axes);
template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& dims);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s);
template <typename T>
Tensor<T> neg(const Tensor<T>& x);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

// Reduces `g` over the axes a broadcast expanded, recovering `target` dims.
template <typename T>
Tensor<T> sum_to_shape(const Tensor<T>& g, const Shape& target) {
  if (g.dims() == target) return g;
  check(g.rank() == target.size(), "sum_to_shape: rank mismatch");
  std::vector<int> axes;
  for (size_t i = 0; i < target.size(); ++i) {
    if (target[i] == g.dims()[i]) continue;
    check(target[i] == 1, "sum_to_shape: incompatible target " +
                              shape_str(target) + " from " +
                              shape_str(g.dims()));
    axes.push_back(static_cast<int>(i));
  }
  return reduce_sum(g, axes);
}

// ---------------------------------------------------------------------------
// Elementwise binary ops.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = Tensor<T>::zeros(broadcast_shape(a.dims(), b.dims()));
  detail::binary_kernel(a, b, out, [](T x, T y) { return x + y; });
  Shape da = a.dims(), db = b.dims();
  return record_op<T>("add", {a, b}, std::move(out),
                      [da, db](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{sum_to_shape(g, da),
                                                      sum_to_shape(g, db)};
                      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = Tensor<T>::zeros(broadcast_shape(a.dims(), b.dims()));
  detail::binary_kernel(a, b, out, [](T x, T y) { return x - y; });
  Shape da = a.dims(), db = b.dims();
  return record_op<T>("sub", {a, b}, std::move(out),
                      [da, db](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{
                            sum_to_shape(g, da), sum_to_shape(neg(g), db)};
                      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = Tensor<T>::zeros(broadcast_shape(a.dims(), b.dims()));
  detail::binary_kernel(a, b, out, [](T x, T y) { return x * y; });
  Shape da = a.dims(), db = b.dims();
  return record_op<T>("mul", {a, b}, std::move(out),
                      [a, b, da, db](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{
                            sum_to_shape(mul(g, b), da),
                            sum_to_shape(mul(g, a), db)};
                      });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = Tensor<T>::zeros(broadcast_shape(a.dims(), b.dims()));
  detail::binary_kernel(a, b, out, [](T x, T y) { return x / y; });
  Shape da = a.dims(), db = b.dims();
  return record_op<T>(
      "div", {a, b}, std::move(out), [a, b, da, db](const Tensor<T>& g) {
        Tensor<T> ga = sum_to_shape(div(g, b), da);
        Tensor<T> gb = sum_to_shape(neg(div(mul(g, a), mul(b, b))), db);
        return std::vector<Tensor<T>>{std::move(ga), std::move(gb)};
      });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops.

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  Tensor<T> out = detail::unary_map(x, [](T v) { return -v; });
  return record_op<T>("neg", {x}, std::move(out), [](const Tensor<T>& g) {
    return std::vector<Tensor<T>>{neg(g)};
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  Tensor<T> out = detail::unary_map(x, [s](T v) { return v * s; });
  return record_op<T>("scale", {x}, std::move(out), [s](const Tensor<T>& g) {
    return std::vector<Tensor<T>>{scale(g, s)};
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  Tensor<T> out = detail::unary_map(x, [s](T v) { return v + s; });
  return record_op<T>("add_scalar", {x}, std::move(out),
                      [](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{g};
                      });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  Tensor<T> out = detail::unary_map(x, [](T v) { return std::fabs(v); });
  // sign(0) taken as 0; constant w.r.t. further differentiation
  Tensor<T> sign = detail::unary_map(
      x, [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
  return record_op<T>("abs", {x}, std::move(out),
                      [sign](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{mul(g, sign)};
                      });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  Tensor<T> out = detail::unary_map(x, [](T v) { return v * v; });
  return record_op<T>("square", {x}, std::move(out),
                      [x](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{mul(scale(g, T(2)), x)};
                      });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  Tensor<T> out = detail::unary_map(x, [](T v) { return std::sqrt(v); });
  return record_op<T>("sqrt", {x}, std::move(out),
                      [out](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{
                            div(scale(g, T(0.5)), out)};
                      });
}

// Gradient is 1 inside [lo, hi] (inclusive) and 0 outside.
template <typename T>
Tensor<T> clip(const Tensor<T>& x, T lo, T hi) {
  check(lo <= hi, "clip: lo must not exceed hi");
  Tensor<T> out =
      detail::unary_map(x, [lo, hi](T v) { return std::clamp(v, lo, hi); });
  Tensor<T> pass = detail::unary_map(
      x, [lo, hi](T v) { return (v >= lo && v <= hi) ? T(1) : T(0); });
  return record_op<T>("clip", {x}, std::move(out),
                      [pass](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{mul(g, pass)};
                      });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T lo) {
  Tensor<T> out = detail::unary_map(x, [lo](T v) { return std::max(v, lo); });
  Tensor<T> pass =
      detail::unary_map(x, [lo](T v) { return v >= lo ? T(1) : T(0); });
  return record_op<T>("clamp_min", {x}, std::move(out),
                      [pass](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{mul(g, pass)};
                      });
}

template <typename T>
Tensor<T> elu(const Tensor<T>& x) {
  Tensor<T> out = detail::unary_map(
      x, [](T v) { return v > T(0) ? v : static_cast<T>(std::expm1(v)); });
  Tensor<T> deriv = detail::unary_map(x, [](T v) {
    return v > T(0) ? T(1) : static_cast<T>(std::exp(v));
  });
  return record_op<T>("elu", {x}, std::move(out),
                      [deriv](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{mul(g, deriv)};
                      });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T alpha) {
  Tensor<T> out = detail::unary_map(
      x, [alpha](T v) { return v > T(0) ? v : alpha * v; });
  Tensor<T> deriv = detail::unary_map(
      x, [alpha](T v) { return v > T(0) ? T(1) : alpha; });
  return record_op<T>("leaky_relu", {x}, std::move(out),
                      [deriv](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{mul(g, deriv)};
                      });
}

// ---------------------------------------------------------------------------
// Reductions. Reduced axes keep extent 1, so rank is preserved and results
// broadcast back naturally. An empty axis list reduces nothing.

namespace detail {

template <typename T>
Tensor<T> reduce_impl(const Tensor<T>& x, const std::vector<int>& axes,
                      bool mean) {
  Shape od = x.dims();
  int64_t count = 1;
  for (int a : axes) {
    check(a >= 0 && static_cast<size_t>(a) < od.size(),
          "reduce: axis out of range");
    if (od[a] != 1) count *= od[a];
    od[a] = 1;
  }
  Tensor<T> out = Tensor<T>::zeros(od);
  const Shape& xd = x.dims();
  auto so = broadcast_strides(od, xd);
  const T* px = x.ptr();
  T* po = out.ptr();
  if (xd.size() == 4) {
    int64_t k = 0;
    for (int64_t i0 = 0; i0 < xd[0]; ++i0)
      for (int64_t i1 = 0; i1 < xd[1]; ++i1)
        for (int64_t i2 = 0; i2 < xd[2]; ++i2) {
          T* ro = po + i0 * so[0] + i1 * so[1] + i2 * so[2];
          for (int64_t i3 = 0; i3 < xd[3]; ++i3) ro[i3 * so[3]] += px[k++];
        }
  } else {
    std::vector<int64_t> idx(xd.size(), 0);
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
      int64_t oo = 0;
      for (size_t d = 0; d < xd.size(); ++d) oo += idx[d] * so[d];
      po[oo] += px[i];
      for (size_t d = xd.size(); d-- > 0;) {
        if (++idx[d] < xd[d]) break;
        idx[d] = 0;
      }
    }
  }
  if (mean && count > 1) {
    T inv = T(1) / static_cast<T>(count);
    for (int64_t i = 0; i < out.numel(); ++i) po[i] *= inv;
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, const std::vector<int>& axes) {
  Tensor<T> out = detail::reduce_impl(x, axes, /*mean=*/false);
  Shape xd = x.dims();
  return record_op<T>("reduce_sum", {x}, std::move(out),
                      [xd](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{broadcast_to(g, xd)};
                      });
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, const std::vector<int>& axes) {
  Tensor<T> out = detail::reduce_impl(x, axes, /*mean=*/true);
  Shape xd = x.dims();
  int64_t count = 1;
  for (int a : axes)
    if (xd[a] != 1) count *= xd[a];
  T inv = T(1) / static_cast<T>(count);
  return record_op<T>("reduce_mean", {x}, std::move(out),
                      [xd, inv](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{
                            broadcast_to(scale(g, inv), xd)};
                      });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  std::vector<int> axes(x.rank());
  for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
  return reduce_sum(x, axes);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  std::vector<int> axes(x.rank());
  for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
  return reduce_mean(x, axes);
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& dims) {
  check(broadcast_shape(x.dims(), dims) == dims,
        "broadcast_to: cannot expand " + shape_str(x.dims()) + " to " +
            shape_str(dims));
  if (x.dims() == dims) return x;
  Tensor<T> out = Tensor<T>::zeros(dims);
  Tensor<T> ones = Tensor<T>::ones(dims);
  detail::binary_kernel(x, ones, out, [](T a, T) { return a; });
  Shape xd = x.dims();
  return record_op<T>("broadcast_to", {x}, std::move(out),
                      [xd](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{sum_to_shape(g, xd)};
                      });
}

// ---------------------------------------------------------------------------
// Shape ops.

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape dims) {
  check(shape_numel(dims) == x.numel(),
        "reshape: element count mismatch " + shape_str(x.dims()) + " to " +
            shape_str(dims));
  Tensor<T> out = Tensor<T>::from(dims, {x.data().begin(), x.data().end()});
  Shape xd = x.dims();
  return record_op<T>("reshape", {x}, std::move(out),
                      [xd](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{reshape(g, xd)};
                      });
}

// Flattens (n, ...) to rank-2 (n, rest).
template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  check(x.rank() >= 1, "flatten: rank must be at least 1");
  return reshape(x, Shape{x.dim(0), x.numel() / x.dim(0)});
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  check(x.rank() == 2, "transpose2d: rank-2 required");
  int64_t m = x.dim(0), n = x.dim(1);
  Tensor<T> out = Tensor<T>::zeros({n, m});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) po[j * m + i] = px[i * n + j];
  return record_op<T>("transpose2d", {x}, std::move(out),
                      [](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{transpose2d(g)};
                      });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 operands required");
  check(a.dim(1) == b.dim(0), "matmul: inner dims " + shape_str(a.dims()) +
                                  " vs " + shape_str(b.dims()));
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({m, n});
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t l = 0; l < k; ++l) {
      T av = pa[i * k + l];
      const T* rb = pb + l * n;
      T* ro = po + i * n;
      for (int64_t j = 0; j < n; ++j) ro[j] += av * rb[j];
    }
  return record_op<T>("matmul", {a, b}, std::move(out),
                      [a, b](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{
                            matmul(g, transpose2d(b)),
                            matmul(transpose2d(a), g)};
                      });
}

// Fully connected head: x (n, in) -> (n, out) via weight (out, in) + bias.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  check(weight.rank() == 2, "affine: weight must be rank 2");
  check(bias.rank() == 2 && bias.dim(0) == 1 && bias.dim(1) == weight.dim(0),
        "affine: bias must be (1, out)");
  Tensor<T> y = matmul(x, transpose2d(weight));
  return add(y, bias);
}

// ---------------------------------------------------------------------------
// Channel softmax over axis 1 of a rank-4 tensor, with max-subtraction.
// Computes softmax(sc * x). Entries at or below the validity sentinel come
// out exactly 0 because exp underflows.

template <typename T>
Tensor<T> channel_softmax(const Tensor<T>& x, T sc) {
  check(x.rank() == 4, "channel_softmax: rank-4 required");
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out = Tensor<T>::zeros(x.dims());
  const T* px = x.ptr();
  T* po = out.ptr();
  int64_t plane = h * w;
  for (int64_t in = 0; in < n; ++in) {
    const T* bx = px + in * c * plane;
    T* bo = po + in * c * plane;
    for (int64_t p = 0; p < plane; ++p) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int64_t ic = 0; ic < c; ++ic)
        mx = std::max(mx, sc * bx[ic * plane + p]);
      T sum = T(0);
      for (int64_t ic = 0; ic < c; ++ic) {
        T e = std::exp(sc * bx[ic * plane + p] - mx);
        bo[ic * plane + p] = e;
        sum += e;
      }
      T inv = T(1) / sum;
      for (int64_t ic = 0; ic < c; ++ic) bo[ic * plane + p] *= inv;
    }
  }
  return record_op<T>(
      "channel_softmax", {x}, std::move(out), [out, sc](const Tensor<T>& g) {
        Tensor<T> gy = mul(g, out);
        Tensor<T> s = reduce_sum(gy, {1});
        return std::vector<Tensor<T>>{scale(mul(out, sub(g, s)), sc)};
      });
}

// ---------------------------------------------------------------------------
// Spatial padding (rank-4, both spatial axes). Reflection excludes the border
// pixel itself and requires pad < spatial extent.

namespace detail {

inline int64_t reflect_index(int64_t i, int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace detail

template <typename T>
Tensor<T> reflect_fold(const Tensor<T>& g, int64_t pad);

template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, int64_t y0, int64_t x0, int64_t h,
                       int64_t w);

template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, int64_t pad, PaddingMode mode) {
  check(x.rank() == 4, "pad2d: rank-4 required");
  check(pad >= 0, "pad2d: negative pad");
  if (pad == 0) return x;
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (mode == PaddingMode::kReflect)
    check(pad < h && pad < w, "pad2d: reflection pad " + std::to_string(pad) +
                                  " must be smaller than spatial dims " +
                                  shape_str(x.dims()));
  Tensor<T> out = Tensor<T>::zeros({n, c, h + 2 * pad, w + 2 * pad});
  const T* px = x.ptr();
  T* po = out.ptr();
  int64_t oh = h + 2 * pad, ow = w + 2 * pad;
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T* sx = px + nc * h * w;
    T* so = po + nc * oh * ow;
    for (int64_t y = 0; y < oh; ++y) {
      int64_t iy = y - pad;
      if (mode == PaddingMode::kReflect) {
        iy = detail::reflect_index(iy, h);
        for (int64_t xo = 0; xo < ow; ++xo)
          so[y * ow + xo] =
              sx[iy * w + detail::reflect_index(xo - pad, w)];
      } else {
        if (iy < 0 || iy >= h) continue;  // zeros stay
        for (int64_t xo = 0; xo < ow; ++xo) {
          int64_t ix = xo - pad;
          if (ix >= 0 && ix < w) so[y * ow + xo] = sx[iy * w + ix];
        }
      }
    }
  }
  if (mode == PaddingMode::kZero) {
    return record_op<T>("pad2d_zero", {x}, std::move(out),
                        [pad, h, w](const Tensor<T>& g) {
                          return std::vector<Tensor<T>>{
                              crop_spatial(g, pad, pad, h, w)};
                        });
  }
  return record_op<T>("pad2d_reflect", {x}, std::move(out),
                      [pad](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{reflect_fold(g, pad)};
                      });
}

// Adjoint of reflection padding: folds border gradients onto their mirrored
// interior sources.
template <typename T>
Tensor<T> reflect_fold(const Tensor<T>& g, int64_t pad) {
  check(g.rank() == 4, "reflect_fold: rank-4 required");
  int64_t n = g.dim(0), c = g.dim(1), gh = g.dim(2), gw = g.dim(3);
  int64_t h = gh - 2 * pad, w = gw - 2 * pad;
  check(h > 0 && w > 0, "reflect_fold: pad too large for input");
  Tensor<T> out = Tensor<T>::zeros({n, c, h, w});
  const T* pg = g.ptr();
  T* po = out.ptr();
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T* sg = pg + nc * gh * gw;
    T* so = po + nc * h * w;
    for (int64_t y = 0; y < gh; ++y) {
      int64_t iy = detail::reflect_index(y - pad, h);
      for (int64_t x = 0; x < gw; ++x) {
        int64_t ix = detail::reflect_index(x - pad, w);
        so[iy * w + ix] += sg[y * gw + x];
      }
    }
  }
  return record_op<T>("reflect_fold", {g}, std::move(out),
                      [pad](const Tensor<T>& gg) {
                        return std::vector<Tensor<T>>{
                            pad2d(gg, pad, PaddingMode::kReflect)};
                      });
}

// ---------------------------------------------------------------------------
// Spatial crop and its adjoint (embed into zeros at an offset).

template <typename T>
Tensor<T> zero_embed_spatial(const Tensor<T>& x, int64_t out_h, int64_t out_w,
                             int64_t y0, int64_t x0);

template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, int64_t y0, int64_t x0, int64_t h,
                       int64_t w) {
  check(x.rank() == 4, "crop_spatial: rank-4 required");
  int64_t n = x.dim(0), c = x.dim(1), xh = x.dim(2), xw = x.dim(3);
  check(y0 >= 0 && x0 >= 0 && h > 0 && w > 0 && y0 + h <= xh && x0 + w <= xw,
        "crop_spatial: window out of bounds");
  Tensor<T> out = Tensor<T>::zeros({n, c, h, w});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (int64_t nc = 0; nc < n * c; ++nc)
    for (int64_t y = 0; y < h; ++y) {
      const T* sx = px + (nc * xh + y0 + y) * xw + x0;
      T* so = po + (nc * h + y) * w;
      for (int64_t xx = 0; xx < w; ++xx) so[xx] = sx[xx];
    }
  return record_op<T>("crop_spatial", {x}, std::move(out),
                      [xh, xw, y0, x0](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{
                            zero_embed_spatial(g, xh, xw, y0, x0)};
                      });
}

template <typename T>
Tensor<T> zero_embed_spatial(const Tensor<T>& x, int64_t out_h, int64_t out_w,
                             int64_t y0, int64_t x0) {
  check(x.rank() == 4, "zero_embed_spatial: rank-4 required");
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(y0 >= 0 && x0 >= 0 && y0 + h <= out_h && x0 + w <= out_w,
        "zero_embed_spatial: window out of bounds");
  Tensor<T> out = Tensor<T>::zeros({n, c, out_h, out_w});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (int64_t nc = 0; nc < n * c; ++nc)
    for (int64_t y = 0; y < h; ++y) {
      const T* sx = px + (nc * h + y) * w;
      T* so = po + (nc * out_h + y0 + y) * out_w + x0;
      for (int64_t xx = 0; xx < w; ++xx) so[xx] = sx[xx];
    }
  int64_t h0 = h, w0 = w;
  return record_op<T>("zero_embed_spatial", {x}, std::move(out),
                      [y0, x0, h0, w0](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{
                            crop_spatial(g, y0, x0, h0, w0)};
                      });
}

// ---------------------------------------------------------------------------
// Channel concat and slice (adjoint pair).

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t c0, int64_t c1);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == 4 && b.rank() == 4, "concat_channels: rank-4 required");
  check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
        "concat_channels: non-channel dims differ " + shape_str(a.dims()) +
            " vs " + shape_str(b.dims()));
  int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2),
          w = a.dim(3);
  Tensor<T> out = Tensor<T>::zeros({n, ca + cb, h, w});
  int64_t plane = h * w;
  for (int64_t in = 0; in < n; ++in) {
    std::copy_n(a.ptr() + in * ca * plane, ca * plane,
                out.ptr() + in * (ca + cb) * plane);
    std::copy_n(b.ptr() + in * cb * plane, cb * plane,
                out.ptr() + (in * (ca + cb) + ca) * plane);
  }
  return record_op<T>("concat_channels", {a, b}, std::move(out),
                      [ca, cb](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{
                            slice_channels(g, 0, ca),
                            slice_channels(g, ca, ca + cb)};
                      });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t c0, int64_t c1) {
  check(x.rank() == 4, "slice_channels: rank-4 required");
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(0 <= c0 && c0 < c1 && c1 <= c, "slice_channels: bad range");
  int64_t cs = c1 - c0, plane = h * w;
  Tensor<T> out = Tensor<T>::zeros({n, cs, h, w});
  for (int64_t in = 0; in < n; ++in)
    std::copy_n(x.ptr() + (in * c + c0) * plane, cs * plane,
                out.ptr() + in * cs * plane);
  return record_op<T>(
      "slice_channels", {x}, std::move(out), [c, c0](const Tensor<T>& g) {
        int64_t n = g.dim(0), cs = g.dim(1), h = g.dim(2), w = g.dim(3);
        Tensor<T> big = Tensor<T>::zeros({n, c, h, w});
        int64_t plane = h * w;
        for (int64_t in = 0; in < n; ++in)
          std::copy_n(g.ptr() + in * cs * plane, cs * plane,
                      big.ptr() + (in * c + c0) * plane);
        // embedding into zeros is itself adjoint to slicing
        return std::vector<Tensor<T>>{record_op<T>(
            "channel_embed", {g}, std::move(big),
            [c0, cs](const Tensor<T>& gg) {
              return std::vector<Tensor<T>>{slice_channels(gg, c0, c0 + cs)};
            })};
      });
}

// ---------------------------------------------------------------------------
// Batch slice and concat (adjoint pair), used to run per-sample layers.

template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, int64_t b0, int64_t b1);

template <typename T>
Tensor<T> concat_batch(const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), "concat_batch: no inputs");
  const Shape& d0 = parts[0].dims();
  check(d0.size() == 4, "concat_batch: rank-4 required");
  int64_t total = 0;
  for (const auto& p : parts) {
    check(p.rank() == 4 && p.dim(1) == d0[1] && p.dim(2) == d0[2] &&
              p.dim(3) == d0[3],
          "concat_batch: mismatched dims");
    total += p.dim(0);
  }
  Tensor<T> out = Tensor<T>::zeros({total, d0[1], d0[2], d0[3]});
  int64_t slab = d0[1] * d0[2] * d0[3];
  int64_t off = 0;
  std::vector<int64_t> counts;
  for (const auto& p : parts) {
    std::copy_n(p.ptr(), p.dim(0) * slab, out.ptr() + off * slab);
    off += p.dim(0);
    counts.push_back(p.dim(0));
  }
  return record_op<T>("concat_batch", parts, std::move(out),
                      [counts](const Tensor<T>& g) {
                        std::vector<Tensor<T>> gs;
                        int64_t at = 0;
                        for (int64_t c : counts) {
                          gs.push_back(slice_batch(g, at, at + c));
                          at += c;
                        }
                        return gs;
                      });
}

template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, int64_t b0, int64_t b1) {
  check(x.rank() == 4, "slice_batch: rank-4 required");
  int64_t n = x.dim(0);
  check(0 <= b0 && b0 < b1 && b1 <= n, "slice_batch: bad range");
  int64_t slab = x.dim(1) * x.dim(2) * x.dim(3);
  Tensor<T> out = Tensor<T>::zeros({b1 - b0, x.dim(1), x.dim(2), x.dim(3)});
  std::copy_n(x.ptr() + b0 * slab, (b1 - b0) * slab, out.ptr());
  return record_op<T>(
      "slice_batch", {x}, std::move(out), [n, b0](const Tensor<T>& g) {
        int64_t nb = g.dim(0), slab = g.dim(1) * g.dim(2) * g.dim(3);
        Tensor<T> big = Tensor<T>::zeros({n, g.dim(1), g.dim(2), g.dim(3)});
        std::copy_n(g.ptr(), nb * slab, big.ptr() + b0 * slab);
        return std::vector<Tensor<T>>{record_op<T>(
            "batch_embed", {g}, std::move(big), [b0, nb](const Tensor<T>& gg) {
              return std::vector<Tensor<T>>{slice_batch(gg, b0, b0 + nb)};
            })};
      });
}

// ---------------------------------------------------------------------------
// Nearest-neighbor resize. Upscale replicates; downscale picks the top-left
// pixel of each block. Factors are 2 or 4 either way.

template <typename T>
Tensor<T> block_sum(const Tensor<T>& x, int64_t f);
template <typename T>
Tensor<T> stride_embed(const Tensor<T>& x, int64_t f);
template <typename T>
Tensor<T> nearest_down(const Tensor<T>& x, int64_t f);

template <typename T>
Tensor<T> nearest_up(const Tensor<T>& x, int64_t f) {
  check(x.rank() == 4, "nearest_up: rank-4 required");
  check(f >= 1, "nearest_up: factor must be positive");
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out = Tensor<T>::zeros({n, c, h * f, w * f});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (int64_t nc = 0; nc < n * c; ++nc)
    for (int64_t y = 0; y < h * f; ++y) {
      const T* sx = px + (nc * h + y / f) * w;
      T* so = po + (nc * h * f + y) * (w * f);
      for (int64_t xx = 0; xx < w * f; ++xx) so[xx] = sx[xx / f];
    }
  return record_op<T>("nearest_up", {x}, std::move(out),
                      [f](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{block_sum(g, f)};
                      });
}

template <typename T>
Tensor<T> block_sum(const Tensor<T>& x, int64_t f) {
  check(x.rank() == 4, "block_sum: rank-4 required");
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(h % f == 0 && w % f == 0, "block_sum: dims not divisible by factor");
  Tensor<T> out = Tensor<T>::zeros({n, c, h / f, w / f});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (int64_t nc = 0; nc < n * c; ++nc)
    for (int64_t y = 0; y < h; ++y) {
      const T* sx = px + (nc * h + y) * w;
      T* so = po + (nc * (h / f) + y / f) * (w / f);
      for (int64_t xx = 0; xx < w; ++xx) so[xx / f] += sx[xx];
    }
  return record_op<T>("block_sum", {x}, std::move(out),
                      [f](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{nearest_up(g, f)};
                      });
}

template <typename T>
Tensor<T> nearest_down(const Tensor<T>& x, int64_t f) {
  check(x.rank() == 4, "nearest_down: rank-4 required");
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(h % f == 0 && w % f == 0,
        "nearest_down: dims " + shape_str(x.dims()) +
            " not divisible by factor " + std::to_string(f));
  Tensor<T> out = Tensor<T>::zeros({n, c, h / f, w / f});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (int64_t nc = 0; nc < n * c; ++nc)
    for (int64_t y = 0; y < h / f; ++y) {
      const T* sx = px + (nc * h + y * f) * w;
      T* so = po + (nc * (h / f) + y) * (w / f);
      for (int64_t xx = 0; xx < w / f; ++xx) so[xx] = sx[xx * f];
    }
  return record_op<T>("nearest_down", {x}, std::move(out),
                      [f](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{stride_embed(g, f)};
                      });
}

template <typename T>
Tensor<T> stride_embed(const Tensor<T>& x, int64_t f) {
  check(x.rank() == 4, "stride_embed: rank-4 required");
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out = Tensor<T>::zeros({n, c, h * f, w * f});
  const T* px = x.ptr();
  T* po = out.ptr();
  for (int64_t nc = 0; nc < n * c; ++nc)
    for (int64_t y = 0; y < h; ++y) {
      const T* sx = px + (nc * h + y) * w;
      T* so = po + (nc * h * f + y * f) * (w * f);
      for (int64_t xx = 0; xx < w; ++xx) so[xx * f] = sx[xx];
    }
  return record_op<T>("stride_embed", {x}, std::move(out),
                      [f](const Tensor<T>& g) {
                        return std::vector<Tensor<T>>{nearest_down(g, f)};
                      });
}

// factor in {4, 2, 1, 1/2, 1/4}
template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& x, double factor) {
  if (factor == 1.0) return x;
  if (factor == 2.0) return nearest_up(x, 2);
  if (factor == 4.0) return nearest_up(x, 4);
  if (factor == 0.5) return nearest_down(x, 2);
  if (factor == 0.25) return nearest_down(x, 4);
  throw Error("resize_nearest: unsupported factor " + std::to_string(factor));
}

// ---------------------------------------------------------------------------
// Operator sugar.

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) {
  return div(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& x) {
  return neg(x);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& x, T s) {
  return scale(x, s);
}
template <typename T>
Tensor<T> operator*(T s, const Tensor<T>& x) {
  return scale(x, s);
}
template <typename T>
Tensor<T> operator+(const Tensor<T>& x, T s) {
  return add_scalar(x, s);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& x, T s) {
  return add_scalar(x, -s);
}

}  // namespace cain
