#pragma once

#include <algorithm>

#include "cain/ops.h"

namespace cain {

namespace detail {

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t s, int64_t d,
                               int64_t p) {
  return (in + 2 * p - d * (k - 1) - 1) / s + 1;
}

// Valid output range [lo, hi] such that o*s + k_off - p lands in [0, extent).
inline void conv_range(int64_t s, int64_t k_off, int64_t p, int64_t extent,
                       int64_t out_extent, int64_t& lo, int64_t& hi) {
  int64_t num_lo = p - k_off;
  lo = num_lo <= 0 ? 0 : (num_lo + s - 1) / s;
  int64_t num_hi = extent - 1 + p - k_off;
  hi = num_hi < 0 ? -1 : num_hi / s;
  if (hi > out_extent - 1) hi = out_extent - 1;
  if (lo < 0) lo = 0;
}

template <typename T>
void conv_geometry_checks(const Tensor<T>& x, const Tensor<T>& w, int64_t s,
                          int64_t d, int64_t p, const char* op) {
  check(x.rank() == 4 && w.rank() == 4,
        std::string(op) + ": rank-4 tensors required");
  check(s >= 1 && d >= 1, std::string(op) + ": stride and dilation must be >= 1");
  check(p >= 0, std::string(op) + ": negative padding");
}

}  // namespace detail

template <typename T>
Tensor<T> conv_data_grad(const Tensor<T>& g, const Tensor<T>& w, int64_t s,
                         int64_t d, int64_t p, int64_t h, int64_t ww);
template <typename T>
Tensor<T> conv_filter_grad(const Tensor<T>& x, const Tensor<T>& g, int64_t s,
                           int64_t d, int64_t p, int64_t kh, int64_t kw);

// Cross-correlation with zero padding: x (n,ci,h,w) * w (co,ci,kh,kw).
template <typename T>
Tensor<T> conv_fwd(const Tensor<T>& x, const Tensor<T>& w, int64_t s,
                   int64_t d, int64_t p) {
  detail::conv_geometry_checks(x, w, s, d, p, "conv_fwd");
  int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), iw = x.dim(3);
  int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(1) == ci, "conv_fwd: channel mismatch, input " +
                            shape_str(x.dims()) + " filters " +
                            shape_str(w.dims()));
  int64_t oh = detail::conv_out_extent(h, kh, s, d, p);
  int64_t ow = detail::conv_out_extent(iw, kw, s, d, p);
  check(oh > 0 && ow > 0, "conv_fwd: output would be empty for input " +
                              shape_str(x.dims()));
  Tensor<T> out = Tensor<T>::zeros({n, co, oh, ow});
  const T* px = x.ptr();
  const T* pw = w.ptr();
  T* po = out.ptr();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t in = 0; in < n; ++in)
    for (int64_t oc = 0; oc < co; ++oc) {
      T* ybase = po + (in * co + oc) * oh * ow;
      for (int64_t ic = 0; ic < ci; ++ic) {
        const T* xbase = px + (in * ci + ic) * h * iw;
        const T* wbase = pw + (oc * ci + ic) * kh * kw;
        for (int64_t ky = 0; ky < kh; ++ky) {
          int64_t ylo, yhi;
          detail::conv_range(s, ky * d, p, h, oh, ylo, yhi);
          for (int64_t kx = 0; kx < kw; ++kx) {
            T wv = wbase[ky * kw + kx];
            if (wv == T(0)) continue;
            int64_t xlo, xhi;
            detail::conv_range(s, kx * d, p, iw, ow, xlo, xhi);
            int64_t xoff = kx * d - p;
            for (int64_t oy = ylo; oy <= yhi; ++oy) {
              const T* xrow = xbase + (oy * s + ky * d - p) * iw + xoff;
              T* yrow = ybase + oy * ow;
              for (int64_t ox = xlo; ox <= xhi; ++ox)
                yrow[ox] += wv * xrow[ox * s];
            }
          }
        }
      }
    }
  int64_t hh = h, www = iw;
  return record_op<T>(
      "conv_fwd", {x, w}, std::move(out),
      [x, w, s, d, p, hh, www, kh, kw](const Tensor<T>& g) {
        return std::vector<Tensor<T>>{
            conv_data_grad(g, w, s, d, p, hh, www),
            conv_filter_grad(x, g, s, d, p, kh, kw)};
      });
}

// Adjoint of conv_fwd in its data argument: scatters g (n,co,oh,ow) back
// through w (co,ci,kh,kw) onto an (n,ci,h,w) canvas. Also the building block
// for transposed convolution and attention pasting.
template <typename T>
Tensor<T> conv_data_grad(const Tensor<T>& g, const Tensor<T>& w, int64_t s,
                         int64_t d, int64_t p, int64_t h, int64_t ww) {
  detail::conv_geometry_checks(g, w, s, d, p, "conv_data_grad");
  int64_t n = g.dim(0), co = g.dim(1), oh = g.dim(2), ow = g.dim(3);
  int64_t ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(0) == co, "conv_data_grad: channel mismatch, grad " +
                            shape_str(g.dims()) + " filters " +
                            shape_str(w.dims()));
  check(detail::conv_out_extent(h, kh, s, d, p) == oh &&
            detail::conv_out_extent(ww, kw, s, d, p) == ow,
        "conv_data_grad: grad dims " + shape_str(g.dims()) +
            " inconsistent with target " + std::to_string(h) + "x" +
            std::to_string(ww));
  Tensor<T> out = Tensor<T>::zeros({n, ci, h, ww});
  const T* pg = g.ptr();
  const T* pw = w.ptr();
  T* po = out.ptr();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < ci; ++ic) {
      T* xbase = po + (in * ci + ic) * h * ww;
      for (int64_t oc = 0; oc < co; ++oc) {
        const T* gbase = pg + (in * co + oc) * oh * ow;
        const T* wbase = pw + (oc * ci + ic) * kh * kw;
        for (int64_t ky = 0; ky < kh; ++ky) {
          int64_t ylo, yhi;
          detail::conv_range(s, ky * d, p, h, oh, ylo, yhi);
          for (int64_t kx = 0; kx < kw; ++kx) {
            T wv = wbase[ky * kw + kx];
            if (wv == T(0)) continue;
            int64_t xlo, xhi;
            detail::conv_range(s, kx * d, p, ww, ow, xlo, xhi);
            int64_t xoff = kx * d - p;
            for (int64_t oy = ylo; oy <= yhi; ++oy) {
              T* xrow = xbase + (oy * s + ky * d - p) * ww + xoff;
              const T* grow = gbase + oy * ow;
              for (int64_t ox = xlo; ox <= xhi; ++ox)
                xrow[ox * s] += wv * grow[ox];
            }
          }
        }
      }
    }
  return record_op<T>(
      "conv_data_grad", {g, w}, std::move(out),
      [g, w, s, d, p, kh, kw](const Tensor<T>& gz) {
        return std::vector<Tensor<T>>{
            conv_fwd(gz, w, s, d, p),
            conv_filter_grad(gz, g, s, d, p, kh, kw)};
      });
}

// Adjoint of conv_fwd in its filter argument: correlates x (n,ci,h,w) with
// g (n,co,oh,ow) into filter space (co,ci,kh,kw).
template <typename T>
Tensor<T> conv_filter_grad(const Tensor<T>& x, const Tensor<T>& g, int64_t s,
                           int64_t d, int64_t p, int64_t kh, int64_t kw) {
  detail::conv_geometry_checks(x, g, s, d, p, "conv_filter_grad");
  int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), ww = x.dim(3);
  int64_t co = g.dim(1), oh = g.dim(2), ow = g.dim(3);
  check(g.dim(0) == n, "conv_filter_grad: batch mismatch");
  check(detail::conv_out_extent(h, kh, s, d, p) == oh &&
            detail::conv_out_extent(ww, kw, s, d, p) == ow,
        "conv_filter_grad: grad dims " + shape_str(g.dims()) +
            " inconsistent with input " + shape_str(x.dims()));
  Tensor<T> out = Tensor<T>::zeros({co, ci, kh, kw});
  const T* px = x.ptr();
  const T* pg = g.ptr();
  T* po = out.ptr();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t oc = 0; oc < co; ++oc)
    for (int64_t ic = 0; ic < ci; ++ic) {
      T* wbase = po + (oc * ci + ic) * kh * kw;
      for (int64_t ky = 0; ky < kh; ++ky) {
        int64_t ylo, yhi;
        detail::conv_range(s, ky * d, p, h, oh, ylo, yhi);
        for (int64_t kx = 0; kx < kw; ++kx) {
          int64_t xlo, xhi;
          detail::conv_range(s, kx * d, p, ww, ow, xlo, xhi);
          int64_t xoff = kx * d - p;
          T acc = T(0);
          for (int64_t in = 0; in < n; ++in) {
            const T* xbase = px + (in * ci + ic) * h * ww;
            const T* gbase = pg + (in * co + oc) * oh * ow;
            for (int64_t oy = ylo; oy <= yhi; ++oy) {
              const T* xrow = xbase + (oy * s + ky * d - p) * ww + xoff;
              const T* grow = gbase + oy * ow;
              for (int64_t ox = xlo; ox <= xhi; ++ox)
                acc += grow[ox] * xrow[ox * s];
            }
          }
          wbase[ky * kw + kx] = acc;
        }
      }
    }
  int64_t hh = h, www = ww;
  return record_op<T>(
      "conv_filter_grad", {x, g}, std::move(out),
      [x, g, s, d, p, hh, www](const Tensor<T>& gv) {
        return std::vector<Tensor<T>>{
            conv_data_grad(g, gv, s, d, p, hh, www),
            conv_fwd(x, gv, s, d, p)};
      });
}

// Square odd kernels; padding sized to preserve spatial dims at stride 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int64_t stride,
                 int64_t dilation, PaddingMode mode) {
  check(w.rank() == 4, "conv2d: filters must be rank 4");
  int64_t kh = w.dim(2), kw = w.dim(3);
  check(kh == kw, "conv2d: kernel must be square, got " + shape_str(w.dims()));
  check(kh % 2 == 1, "conv2d: kernel size must be odd, got " +
                         std::to_string(kh));
  int64_t p = dilation * (kh - 1) / 2;
  if (mode == PaddingMode::kReflect)
    return conv_fwd(pad2d(x, p, PaddingMode::kReflect), w, stride, dilation,
                    int64_t{0});
  return conv_fwd(x, w, stride, dilation, p);
}

// Each input element scatters filter * value into the output; the exact
// adjoint of a stride-s valid convolution. filters (ci, co, kh, kw);
// output spatial extent h*stride + (k - stride).
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& w,
                            int64_t stride) {
  check(x.rank() == 4 && w.rank() == 4, "transposed_conv2d: rank-4 required");
  check(x.dim(1) == w.dim(0),
        "transposed_conv2d: channel mismatch, input " + shape_str(x.dims()) +
            " filters " + shape_str(w.dims()));
  int64_t kh = w.dim(2), kw = w.dim(3);
  int64_t oh = (x.dim(2) - 1) * stride + kh;
  int64_t ow = (x.dim(3) - 1) * stride + kw;
  return conv_data_grad(x, w, stride, int64_t{1}, int64_t{0}, oh, ow);
}

}  // namespace cain
