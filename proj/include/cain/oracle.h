#pragma once

// Brute-force reference implementations used by tests and the `check`
// command. Everything here is scalar loops over raw buffers in 64-bit
// arithmetic; none of it may call into the optimized kernels.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cain/attention.h"
#include "cain/tensor.h"

namespace cain {

template <typename T>
TensorD to_f64(const Tensor<T>& x) {
  std::vector<double> v(x.numel());
  auto s = x.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(s[i]);
  return TensorD::from(x.dims(), std::move(v));
}

inline TensorF to_f32(const TensorD& x) {
  std::vector<float> v(x.numel());
  auto s = x.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(s[i]);
  return TensorF::from(x.dims(), std::move(v));
}

// Direct convolution, nothing shared with the fast path. Zero padding.
inline TensorD naive_conv(const TensorD& x, const TensorD& w, int64_t stride,
                          int64_t dilation, int64_t pad) {
  int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), iw = x.dim(3);
  int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(1) == ci, "naive_conv: channel mismatch");
  int64_t oh = (h + 2 * pad - dilation * (kh - 1) - 1) / stride + 1;
  int64_t ow = (iw + 2 * pad - dilation * (kw - 1) - 1) / stride + 1;
  TensorD out = TensorD::zeros({n, co, oh, ow});
  for (int64_t in = 0; in < n; ++in)
    for (int64_t oc = 0; oc < co; ++oc)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = 0;
          for (int64_t ic = 0; ic < ci; ++ic)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                int64_t sy = oy * stride - pad + ky * dilation;
                int64_t sx = ox * stride - pad + kx * dilation;
                if (sy < 0 || sy >= h || sx < 0 || sx >= iw) continue;
                acc += x.at(in, ic, sy, sx) * w.at(oc, ic, ky, kx);
              }
          out.at(in, oc, oy, ox) = acc;
        }
  return out;
}

inline TensorD naive_reflect_pad(const TensorD& x, int64_t p) {
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(p < h && p < w, "naive_reflect_pad: pad too large");
  TensorD out = TensorD::zeros({n, c, h + 2 * p, w + 2 * p});
  auto mirror = [](int64_t i, int64_t n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
  };
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < c; ++ic)
      for (int64_t y = 0; y < h + 2 * p; ++y)
        for (int64_t xx = 0; xx < w + 2 * p; ++xx)
          out.at(in, ic, y, xx) =
              x.at(in, ic, mirror(y - p, h), mirror(xx - p, w));
  return out;
}

// Transposed convolution / scatter form: out has the given spatial extent.
inline TensorD naive_conv_data_grad(const TensorD& g, const TensorD& w,
                                    int64_t stride, int64_t dilation,
                                    int64_t pad, int64_t h, int64_t iw) {
  int64_t n = g.dim(0), co = g.dim(1), oh = g.dim(2), ow = g.dim(3);
  int64_t ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(0) == co, "naive_conv_data_grad: channel mismatch");
  TensorD out = TensorD::zeros({n, ci, h, iw});
  for (int64_t in = 0; in < n; ++in)
    for (int64_t oc = 0; oc < co; ++oc)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double gv = g.at(in, oc, oy, ox);
          for (int64_t ic = 0; ic < ci; ++ic)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                int64_t sy = oy * stride - pad + ky * dilation;
                int64_t sx = ox * stride - pad + kx * dilation;
                if (sy < 0 || sy >= h || sx < 0 || sx >= iw) continue;
                out.at(in, ic, sy, sx) += gv * w.at(oc, ic, ky, kx);
              }
        }
  return out;
}

// Literal coherency double-sum: horizontal diagonal sums materialized, then
// vertical sums over the result. Terms are added in ascending shift order.
inline TensorD naive_propagate(const TensorD& scores, int64_t k, int64_t step,
                               int64_t grid_h, int64_t grid_w) {
  int64_t np = scores.dim(1), qh = scores.dim(2), qw = scores.dim(3);
  check(np == grid_h * grid_w, "naive_propagate: lattice mismatch");
  TensorD horiz = TensorD::zeros(scores.dims());
  for (int64_t gy = 0; gy < grid_h; ++gy)
    for (int64_t gx = 0; gx < grid_w; ++gx)
      for (int64_t qy = 0; qy < qh; ++qy)
        for (int64_t qx = 0; qx < qw; ++qx) {
          double acc = 0;
          for (int64_t i = -k; i <= k; ++i) {
            if (i % step != 0) continue;
            int64_t sgx = gx + i / step, sqx = qx + i;
            if (sgx < 0 || sgx >= grid_w || sqx < 0 || sqx >= qw) continue;
            acc += scores.at(0, gy * grid_w + sgx, qy, sqx);
          }
          horiz.at(0, gy * grid_w + gx, qy, qx) = acc;
        }
  TensorD out = TensorD::zeros(scores.dims());
  for (int64_t gy = 0; gy < grid_h; ++gy)
    for (int64_t gx = 0; gx < grid_w; ++gx)
      for (int64_t qy = 0; qy < qh; ++qy)
        for (int64_t qx = 0; qx < qw; ++qx) {
          double acc = 0;
          for (int64_t i = -k; i <= k; ++i) {
            if (i % step != 0) continue;
            int64_t sgy = gy + i / step, sqy = qy + i;
            if (sgy < 0 || sgy >= grid_h || sqy < 0 || sqy >= qh) continue;
            acc += horiz.at(0, sgy * grid_w + gx, sqy, qx);
          }
          out.at(0, gy * grid_w + gx, qy, qx) = acc;
        }
  return out;
}

struct NaiveAttention {
  TensorD output;                // (1, c, h, w)
  TensorD scores;                // (1, P, qh, qw) final weights
  std::vector<int64_t> argmax;   // per query location, winning patch index
  int64_t grid_h = 0, grid_w = 0;
};

// Explicit-loop reference for the full attention layer. Mirrors the layer's
// stated semantics (not its code): cosine scores against center-valid
// background patches, scaled softmax with a -1e9 sentinel on invalid
// patches, ascending-order coherency sums, validity re-masking with
// renormalization, and a coverage-averaged paste of full-resolution patches.
inline NaiveAttention naive_attention(const TensorD& fg, const TensorD& bg,
                                      const TensorD& mask,
                                      const AttentionConfig& cfg) {
  cfg.validate();
  check(fg.rank() == 4 && fg.dim(0) == 1, "naive_attention: fg must be 1nchw");
  check(fg.dims() == bg.dims(), "naive_attention: fg/bg dims differ");
  int64_t c = fg.dim(1), h = fg.dim(2), w = fg.dim(3);
  int64_t r = cfg.downscale_rate, ps = cfg.patch_size, half = ps / 2;
  int64_t st = cfg.extract_stride;
  check(h % r == 0 && w % r == 0, "naive_attention: dims not divisible");
  int64_t hs = h / r, ws = w / r;

  auto small_at = [&](const TensorD& t, int64_t ic, int64_t y,
                      int64_t x) -> double {
    return t.at(0, ic, y * r, x * r);  // top-left pick per block
  };
  int64_t grid_h = (hs + st - 1) / st, grid_w = (ws + st - 1) / st;
  int64_t np = grid_h * grid_w;

  std::vector<uint8_t> valid(np);
  for (int64_t p = 0; p < np; ++p) {
    int64_t cy = (p / grid_w) * st, cx = (p % grid_w) * st;
    valid[p] = small_at(mask, 0, cy, cx) == 1.0 ? 1 : 0;
  }
  {
    int64_t nv = 0;
    for (uint8_t v : valid) nv += v;
    check(nv > 0, "naive_attention: no valid patches");
  }

  // normalized small-resolution patches (zero outside the source)
  std::vector<double> patches(np * c * ps * ps, 0.0);
  auto pat = [&](int64_t p, int64_t ic, int64_t ky, int64_t kx) -> double& {
    return patches[((p * c + ic) * ps + ky) * ps + kx];
  };
  for (int64_t p = 0; p < np; ++p) {
    if (!valid[p]) continue;
    int64_t cy = (p / grid_w) * st, cx = (p % grid_w) * st;
    double sumsq = 0;
    for (int64_t ic = 0; ic < c; ++ic)
      for (int64_t dy = -half; dy <= half; ++dy)
        for (int64_t dx = -half; dx <= half; ++dx) {
          int64_t sy = cy + dy, sx = cx + dx;
          if (sy < 0 || sy >= hs || sx < 0 || sx >= ws) continue;
          double v = small_at(bg, ic, sy, sx);
          pat(p, ic, dy + half, dx + half) = v;
          sumsq += v * v;
        }
    double norm = std::sqrt(sumsq + 1e-24);
    if (norm < kNormFloor) norm = kNormFloor;
    for (int64_t ic = 0; ic < c; ++ic)
      for (int64_t ky = 0; ky < ps; ++ky)
        for (int64_t kx = 0; kx < ps; ++kx) pat(p, ic, ky, kx) /= norm;
  }

  // cosine scores per (patch, query)
  TensorD raw = TensorD::zeros({1, np, hs, ws});
  for (int64_t qy = 0; qy < hs; ++qy)
    for (int64_t qx = 0; qx < ws; ++qx) {
      double qss = 0;
      for (int64_t ic = 0; ic < c; ++ic)
        for (int64_t dy = -half; dy <= half; ++dy)
          for (int64_t dx = -half; dx <= half; ++dx) {
            int64_t sy = qy + dy, sx = qx + dx;
            if (sy < 0 || sy >= hs || sx < 0 || sx >= ws) continue;
            double v = small_at(fg, ic, sy, sx);
            qss += v * v;
          }
      double qnorm = std::sqrt(qss + 1e-24);
      if (qnorm < kNormFloor) qnorm = kNormFloor;
      for (int64_t p = 0; p < np; ++p) {
        if (!valid[p]) {
          raw.at(0, p, qy, qx) = kInvalidScoreSentinel;
          continue;
        }
        double dot = 0;
        for (int64_t ic = 0; ic < c; ++ic)
          for (int64_t dy = -half; dy <= half; ++dy)
            for (int64_t dx = -half; dx <= half; ++dx) {
              int64_t sy = qy + dy, sx = qx + dx;
              if (sy < 0 || sy >= hs || sx < 0 || sx >= ws) continue;
              dot += small_at(fg, ic, sy, sx) * pat(p, ic, dy + half, dx + half);
            }
        raw.at(0, p, qy, qx) = dot / qnorm;
      }
    }

  // scaled softmax over the patch axis
  TensorD soft = TensorD::zeros(raw.dims());
  double sc = cfg.softmax_scale;
  for (int64_t qy = 0; qy < hs; ++qy)
    for (int64_t qx = 0; qx < ws; ++qx) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t p = 0; p < np; ++p)
        mx = std::max(mx, sc * raw.at(0, p, qy, qx));
      double sum = 0;
      for (int64_t p = 0; p < np; ++p) {
        double e = std::exp(sc * raw.at(0, p, qy, qx) - mx);
        soft.at(0, p, qy, qx) = e;
        sum += e;
      }
      for (int64_t p = 0; p < np; ++p) soft.at(0, p, qy, qx) /= sum;
    }

  TensorD prop = cfg.prop_radius > 0
                     ? naive_propagate(soft, cfg.prop_radius, st, grid_h,
                                       grid_w)
                     : soft;

  // drop invalid mass and renormalize each query
  TensorD fin = TensorD::zeros(prop.dims());
  for (int64_t qy = 0; qy < hs; ++qy)
    for (int64_t qx = 0; qx < ws; ++qx) {
      double sum = 0;
      for (int64_t p = 0; p < np; ++p)
        if (valid[p]) sum += prop.at(0, p, qy, qx);
      for (int64_t p = 0; p < np; ++p)
        fin.at(0, p, qy, qx) =
            valid[p] ? prop.at(0, p, qy, qx) / sum : 0.0;
    }

  NaiveAttention res;
  res.grid_h = grid_h;
  res.grid_w = grid_w;
  res.argmax.resize(hs * ws);
  for (int64_t qy = 0; qy < hs; ++qy)
    for (int64_t qx = 0; qx < ws; ++qx) {
      int64_t best = 0;
      double bv = fin.at(0, 0, qy, qx);
      for (int64_t p = 1; p < np; ++p)
        if (fin.at(0, p, qy, qx) > bv) {
          bv = fin.at(0, p, qy, qx);
          best = p;
        }
      res.argmax[qy * ws + qx] = best;
    }

  // gather-average paste of full-resolution patches
  TensorD out = TensorD::zeros({1, c, h, w});
  int64_t stf = st * r;
  for (int64_t ic = 0; ic < c; ++ic)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0;
        int64_t cover = 0;
        for (int64_t qy = 0; qy < hs; ++qy) {
          int64_t ky = y - qy * r + half;
          if (ky < 0 || ky >= ps) continue;
          for (int64_t qx = 0; qx < ws; ++qx) {
            int64_t kx = x - qx * r + half;
            if (kx < 0 || kx >= ps) continue;
            ++cover;
            for (int64_t p = 0; p < np; ++p) {
              double wgt = fin.at(0, p, qy, qx);
              if (wgt == 0.0) continue;
              int64_t cy = (p / grid_w) * stf, cx = (p % grid_w) * stf;
              int64_t sy = cy + ky - half, sx = cx + kx - half;
              double pv = (sy < 0 || sy >= h || sx < 0 || sx >= w)
                              ? 0.0
                              : bg.at(0, ic, sy, sx);
              acc += wgt * pv;
            }
          }
        }
        check(cover > 0, "naive_attention: uncovered output pixel");
        out.at(0, ic, y, x) = acc / cover;
      }

  res.output = std::move(out);
  res.scores = std::move(fin);
  return res;
}

// Central finite differences of a scalar-valued function, element by element.
template <typename T, typename Fn>
Tensor<T> finite_diff_grad(Fn&& fn, const Tensor<T>& x, T step) {
  Tensor<T> g = Tensor<T>::zeros(x.dims());
  auto xv = x.data();
  auto gv = g.data();
  std::vector<T> work(xv.begin(), xv.end());
  Tensor<T> probe = Tensor<T>::from(x.dims(), work);
  auto pv = probe.data();
  for (size_t i = 0; i < xv.size(); ++i) {
    T keep = pv[i];
    pv[i] = keep + step;
    double hi = static_cast<double>(fn(probe));
    pv[i] = keep - step;
    double lo = static_cast<double>(fn(probe));
    pv[i] = keep;
    gv[i] = static_cast<T>((hi - lo) / (2.0 * static_cast<double>(step)));
  }
  return g;
}

struct OracleReport {
  std::string id;
  double max_abs = 0;
  double max_rel = 0;
  double tol_abs = 0;
  double tol_rel = 0;
  bool pass = true;

  std::string line() const;
};

// Element-wise comparison: pass iff |a-b| <= tol_abs + tol_rel*max(|a|,|b|)
// everywhere. max_rel uses a guarded denominator so near-zero entries do not
// blow up the report.
template <typename A, typename B>
OracleReport compare_tensors(std::string id, const Tensor<A>& impl,
                             const Tensor<B>& ref, double tol_abs,
                             double tol_rel) {
  OracleReport rep;
  rep.id = std::move(id);
  rep.tol_abs = tol_abs;
  rep.tol_rel = tol_rel;
  check(impl.dims() == ref.dims(),
        "compare_tensors[" + rep.id + "]: dims differ, impl " +
            shape_str(impl.dims()) + " ref " + shape_str(ref.dims()));
  auto ia = impl.data();
  auto ib = ref.data();
  for (size_t i = 0; i < ia.size(); ++i) {
    double a = static_cast<double>(ia[i]), b = static_cast<double>(ib[i]);
    double d = std::abs(a - b);
    double m = std::max(std::abs(a), std::abs(b));
    rep.max_abs = std::max(rep.max_abs, d);
    rep.max_rel = std::max(rep.max_rel, d / std::max(m, 1e-6));
    if (!(d <= tol_abs + tol_rel * m)) rep.pass = false;
  }
  return rep;
}

// Seeded case suite behind the `check` command and the equivalence gate.
// A nonzero perturbation is injected into every optimized-kernel result
// before comparison, modelling a kernel defect the suite must catch.
std::vector<OracleReport> run_oracle_suite(double perturbation);

}  // namespace cain
