#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "cain/conv.h"
#include "cain/ops.h"

namespace cain {

struct AttentionConfig {
  int64_t patch_size = 3;
  double softmax_scale = 10.0;  // contrast of the matching softmax
  int64_t prop_radius = 2;      // half-width of the coherency sums
  int64_t extract_stride = 1;   // lattice step for background patches
  int64_t downscale_rate = 1;   // 1 or 2; matching runs at reduced resolution

  void validate() const {
    check(patch_size >= 1 && patch_size % 2 == 1,
          "AttentionConfig: patch_size must be odd and positive");
    check(softmax_scale > 0, "AttentionConfig: softmax_scale must be positive");
    check(prop_radius >= 0, "AttentionConfig: prop_radius must be >= 0");
    check(extract_stride >= 1, "AttentionConfig: extract_stride must be >= 1");
    check(downscale_rate == 1 || downscale_rate == 2,
          "AttentionConfig: downscale_rate must be 1 or 2");
  }
};

// Background patches laid out as convolution filters (P, c, ps, ps), one per
// lattice point, row-major over the (grid_h, grid_w) lattice. A patch is
// valid iff its center pixel is known; borders are zero padded.
template <typename T>
struct PatchStack {
  Tensor<T> patches;
  std::vector<uint8_t> valid;
  int64_t grid_h = 0, grid_w = 0;
  int64_t stride = 1;      // lattice step in source pixels
  int64_t patch_size = 0;
  int64_t count() const { return grid_h * grid_w; }
  int64_t valid_count() const {
    int64_t n = 0;
    for (uint8_t v : valid) n += v;
    return n;
  }
};

// Attention weights (1, P, qh, qw) over the patch axis, plus the lattice
// metadata needed to resolve patch indices back to center coordinates.
template <typename T>
struct AttentionScores {
  Tensor<T> scores;
  std::vector<uint8_t> valid;
  int64_t grid_h = 0, grid_w = 0;
  int64_t lattice_step = 1;  // patch center spacing in query pixels
};

template <typename T>
struct AttentionResult {
  Tensor<T> output;
  AttentionScores<T> scores;
};

namespace detail {

template <typename T>
void check_mask_binary(const Tensor<T>& mask) {
  check(mask.rank() == 4 && mask.dim(0) == 1 && mask.dim(1) == 1,
        "mask must have dims (1,1,h,w), got " + shape_str(mask.dims()));
  for (T v : mask.data())
    check(v == T(0) || v == T(1), "mask values must be exactly 0 or 1");
}

template <typename T>
Tensor<T> scatter_patches(const Tensor<T>& gp, int64_t h, int64_t w,
                          int64_t stride, int64_t grid_h, int64_t grid_w);

}  // namespace detail

// Gathers one patch per lattice point of bg (1, c, h, w). Errors when the
// mask leaves no valid patch at all.
template <typename T>
PatchStack<T> extract_patches(const Tensor<T>& bg, const Tensor<T>& mask,
                              int64_t patch_size, int64_t stride) {
  check(bg.rank() == 4 && bg.dim(0) == 1,
        "extract_patches: bg must be (1,c,h,w), got " + shape_str(bg.dims()));
  check(patch_size >= 1 && patch_size % 2 == 1,
        "extract_patches: patch size must be odd");
  check(stride >= 1, "extract_patches: stride must be >= 1");
  detail::check_mask_binary(mask);
  int64_t c = bg.dim(1), h = bg.dim(2), w = bg.dim(3);
  check(mask.dim(2) == h && mask.dim(3) == w,
        "extract_patches: mask dims " + shape_str(mask.dims()) +
            " do not match bg " + shape_str(bg.dims()));
  int64_t grid_h = (h + stride - 1) / stride;
  int64_t grid_w = (w + stride - 1) / stride;
  int64_t np = grid_h * grid_w, half = patch_size / 2;

  PatchStack<T> stack;
  stack.grid_h = grid_h;
  stack.grid_w = grid_w;
  stack.stride = stride;
  stack.patch_size = patch_size;
  stack.valid.resize(np);

  Tensor<T> patches = Tensor<T>::zeros({np, c, patch_size, patch_size});
  const T* pb = bg.ptr();
  T* pp = patches.ptr();
  for (int64_t gy = 0; gy < grid_h; ++gy)
    for (int64_t gx = 0; gx < grid_w; ++gx) {
      int64_t cy = gy * stride, cx = gx * stride;
      int64_t p = gy * grid_w + gx;
      stack.valid[p] = mask.at(0, 0, cy, cx) == T(1) ? 1 : 0;
      for (int64_t ic = 0; ic < c; ++ic)
        for (int64_t dy = -half; dy <= half; ++dy) {
          int64_t sy = cy + dy;
          if (sy < 0 || sy >= h) continue;
          for (int64_t dx = -half; dx <= half; ++dx) {
            int64_t sx = cx + dx;
            if (sx < 0 || sx >= w) continue;
            pp[((p * c + ic) * patch_size + dy + half) * patch_size + dx +
               half] = pb[(ic * h + sy) * w + sx];
          }
        }
    }
  check(stack.valid_count() > 0,
        "extract_patches: no valid patches, the hole covers every center");
  int64_t hh = h, ww = w;
  stack.patches = record_op<T>(
      "extract_patches", {bg}, std::move(patches),
      [hh, ww, stride, grid_h, grid_w](const Tensor<T>& g) {
        return std::vector<Tensor<T>>{
            detail::scatter_patches(g, hh, ww, stride, grid_h, grid_w)};
      });
  return stack;
}

namespace detail {

// Adjoint of extract_patches: accumulates patch gradients back onto the
// source image (border positions that were zero padded are dropped).
template <typename T>
Tensor<T> scatter_patches(const Tensor<T>& gp, int64_t h, int64_t w,
                          int64_t stride, int64_t grid_h, int64_t grid_w) {
  int64_t np = gp.dim(0), c = gp.dim(1), ps = gp.dim(2);
  check(np == grid_h * grid_w, "scatter_patches: patch count mismatch");
  int64_t half = ps / 2;
  Tensor<T> out = Tensor<T>::zeros({1, c, h, w});
  const T* pg = gp.ptr();
  T* po = out.ptr();
  for (int64_t gy = 0; gy < grid_h; ++gy)
    for (int64_t gx = 0; gx < grid_w; ++gx) {
      int64_t cy = gy * stride, cx = gx * stride;
      int64_t p = gy * grid_w + gx;
      for (int64_t ic = 0; ic < c; ++ic)
        for (int64_t dy = -half; dy <= half; ++dy) {
          int64_t sy = cy + dy;
          if (sy < 0 || sy >= h) continue;
          for (int64_t dx = -half; dx <= half; ++dx) {
            int64_t sx = cx + dx;
            if (sx < 0 || sx >= w) continue;
            po[(ic * h + sy) * w + sx] +=
                pg[((p * c + ic) * ps + dy + half) * ps + dx + half];
          }
        }
    }
  Shape gd = gp.dims();
  return record_op<T>("scatter_patches", {gp}, std::move(out),
                      [gd, stride, grid_h, grid_w](const Tensor<T>& gg) {
                        // re-gather; validity plays no role in the adjoint
                        int64_t ps = gd[2];
                        Tensor<T> ones = Tensor<T>::ones({1, 1, gg.dim(2),
                                                          gg.dim(3)});
                        PatchStack<T> st =
                            extract_patches(gg, ones, ps, stride);
                        return std::vector<Tensor<T>>{st.patches};
                      });
}

}  // namespace detail

inline constexpr double kInvalidScoreSentinel = -1e9;
inline constexpr double kNormFloor = 1e-4;

// Cosine similarity of every fg patch against every valid bg patch, laid out
// as (1, P, h, w). Invalid patches carry a large negative sentinel so the
// softmax drives them to exactly zero.
template <typename T>
Tensor<T> match_scores(const Tensor<T>& fg, const PatchStack<T>& stack) {
  check(fg.rank() == 4 && fg.dim(0) == 1,
        "match_scores: fg must be (1,c,h,w)");
  check(fg.dim(1) == stack.patches.dim(1),
        "match_scores: channel mismatch, fg " + shape_str(fg.dims()) +
            " patches " + shape_str(stack.patches.dims()));
  int64_t c = fg.dim(1), ps = stack.patch_size, np = stack.count();
  int64_t half = ps / 2;

  // zero out invalid patches, then l2-normalize with a floored norm
  std::vector<T> vm(np);
  for (int64_t p = 0; p < np; ++p) vm[p] = stack.valid[p] ? T(1) : T(0);
  Tensor<T> valid_mask = Tensor<T>::from({np, 1, 1, 1}, std::move(vm));
  Tensor<T> kept = mul(stack.patches, valid_mask);
  Tensor<T> sumsq = reduce_sum(square(kept), {1, 2, 3});
  Tensor<T> norm =
      clamp_min(sqrt(add_scalar(sumsq, T(1e-24))), static_cast<T>(kNormFloor));
  Tensor<T> normalized = div(kept, norm);

  // query norms over the same window
  Tensor<T> window = Tensor<T>::ones({1, c, ps, ps});
  Tensor<T> qss = conv_fwd(square(fg), window, int64_t{1}, int64_t{1}, half);
  Tensor<T> qnorm =
      clamp_min(sqrt(add_scalar(qss, T(1e-24))), static_cast<T>(kNormFloor));

  Tensor<T> raw = conv_fwd(fg, normalized, int64_t{1}, int64_t{1}, half);
  Tensor<T> cosine = div(raw, qnorm);

  std::vector<T> sv(np);
  for (int64_t p = 0; p < np; ++p)
    sv[p] = stack.valid[p] ? T(0) : static_cast<T>(kInvalidScoreSentinel);
  Tensor<T> sentinel = Tensor<T>::from({1, np, 1, 1}, std::move(sv));
  Tensor<T> keep = reshape(valid_mask, {1, np, 1, 1});
  return add(mul(cosine, keep), sentinel);
}

// Scaled softmax over the patch axis. Sentinel entries underflow to exact 0.
template <typename T>
Tensor<T> attend(const Tensor<T>& raw_scores, T softmax_scale) {
  check(raw_scores.rank() == 4 && raw_scores.dim(0) == 1,
        "attend: scores must be (1,P,h,w)");
  return channel_softmax(raw_scores, softmax_scale);
}

namespace detail {

// One coherency pass: out[gy,gx,qy,qx] = sum_i in[gy,gx+i/step, qy, qx+i]
// (horizontal; the vertical pass shifts gy/qy). Terms whose shifted query
// falls outside the map, or whose shifted center is not a lattice point,
// contribute zero. The operator is self-adjoint, so it is its own backward.
template <typename T>
Tensor<T> propagate_pass(const Tensor<T>& x, int64_t k, int64_t step,
                         int64_t grid_h, int64_t grid_w, bool horizontal) {
  int64_t np = x.dim(1), qh = x.dim(2), qw = x.dim(3);
  check(np == grid_h * grid_w, "propagate: patch axis does not match lattice");
  Tensor<T> out = Tensor<T>::zeros(x.dims());
  const T* px = x.ptr();
  T* po = out.ptr();
  int64_t plane = qh * qw;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t gy = 0; gy < grid_h; ++gy)
    for (int64_t gx = 0; gx < grid_w; ++gx) {
      T* bo = po + (gy * grid_w + gx) * plane;
      for (int64_t qy = 0; qy < qh; ++qy)
        for (int64_t qx = 0; qx < qw; ++qx) {
          T acc = T(0);
          for (int64_t i = -k; i <= k; ++i) {
            if (i % step != 0) continue;
            int64_t d = i / step;
            int64_t sgy = gy, sgx = gx, sqy = qy, sqx = qx;
            if (horizontal) {
              sgx += d;
              sqx += i;
            } else {
              sgy += d;
              sqy += i;
            }
            if (sgx < 0 || sgx >= grid_w || sgy < 0 || sgy >= grid_h)
              continue;
            if (sqx < 0 || sqx >= qw || sqy < 0 || sqy >= qh) continue;
            acc += px[(sgy * grid_w + sgx) * plane + sqy * qw + sqx];
          }
          bo[qy * qw + qx] = acc;
        }
    }
  return record_op<T>(
      horizontal ? "propagate_h" : "propagate_v", {x}, std::move(out),
      [k, step, grid_h, grid_w, horizontal](const Tensor<T>& g) {
        return std::vector<Tensor<T>>{
            propagate_pass(g, k, step, grid_h, grid_w, horizontal)};
      });
}

}  // namespace detail

// Coherency propagation: horizontal diagonal sums, then vertical sums over
// the result. Unnormalized; out-of-range shifted terms contribute zero.
template <typename T>
AttentionScores<T> propagate(const AttentionScores<T>& s, int64_t k) {
  check(k >= 0, "propagate: radius must be >= 0");
  AttentionScores<T> out = s;
  Tensor<T> h = detail::propagate_pass(s.scores, k, s.lattice_step, s.grid_h,
                                       s.grid_w, /*horizontal=*/true);
  out.scores = detail::propagate_pass(h, k, s.lattice_step, s.grid_h,
                                      s.grid_w, /*horizontal=*/false);
  return out;
}

// Pastes each query's score-weighted blend of patches at the query location
// (stamps land at stride-spaced centers); overlaps resolve to the mean via a
// coverage-count map built from an all-ones stamp over the same geometry.
template <typename T>
Tensor<T> paste(const Tensor<T>& scores, const PatchStack<T>& stack,
                int64_t out_h, int64_t out_w, int64_t stride) {
  check(scores.rank() == 4 && scores.dim(0) == 1,
        "paste: scores must be (1,P,h,w)");
  check(scores.dim(1) == stack.count(), "paste: patch axis mismatch");
  int64_t ps = stack.patch_size;
  check(stride <= ps,
        "paste: stride " + std::to_string(stride) +
            " larger than patch size leaves uncovered output pixels");
  int64_t half = ps / 2;
  Tensor<T> summed = conv_data_grad(scores, stack.patches, stride, int64_t{1},
                                    half, out_h, out_w);
  Tensor<T> qones = Tensor<T>::ones({1, 1, scores.dim(2), scores.dim(3)});
  Tensor<T> sones = Tensor<T>::ones({1, 1, ps, ps});
  Tensor<T> coverage =
      conv_data_grad(qones, sones, stride, int64_t{1}, half, out_h, out_w);
  for (T v : coverage.data())
    check(v > T(0), "paste: zero coverage at an output location");
  return div(summed, coverage);
}

// Full layer: match queries against known background patches, sharpen with a
// scaled softmax, propagate for coherency, renormalize, and reconstruct by
// pasting. fg and bg may alias. mask_known is 1 at known feature pixels.
template <typename T>
AttentionResult<T> contextual_attention(const Tensor<T>& fg,
                                        const Tensor<T>& bg,
                                        const Tensor<T>& mask_known,
                                        const AttentionConfig& cfg) {
  cfg.validate();
  check(fg.rank() == 4 && fg.dim(0) == 1,
        "contextual_attention: fg must be (1,c,h,w), batch handled by caller");
  check(fg.dims() == bg.dims(),
        "contextual_attention: fg dims " + shape_str(fg.dims()) +
            " differ from bg " + shape_str(bg.dims()));
  int64_t h = fg.dim(2), w = fg.dim(3);
  int64_t r = cfg.downscale_rate;
  check(h % r == 0 && w % r == 0,
        "contextual_attention: dims " + shape_str(fg.dims()) +
            " not divisible by downscale rate");

  Tensor<T> fg_m = fg, bg_m = bg, mask_m = mask_known;
  if (r > 1) {
    fg_m = nearest_down(fg, r);
    bg_m = nearest_down(bg, r);
    mask_m = nearest_down(mask_known, r);
  }

  PatchStack<T> match_stack =
      extract_patches(bg_m, mask_m, cfg.patch_size, cfg.extract_stride);

  Tensor<T> raw = match_scores(fg_m, match_stack);
  Tensor<T> soft = attend(raw, static_cast<T>(cfg.softmax_scale));

  AttentionScores<T> sc;
  sc.scores = soft;
  sc.valid = match_stack.valid;
  sc.grid_h = match_stack.grid_h;
  sc.grid_w = match_stack.grid_w;
  sc.lattice_step = cfg.extract_stride;
  if (cfg.prop_radius > 0) sc = propagate(sc, cfg.prop_radius);

  // propagation can leak mass onto hole-centered patches; drop it and
  // renormalize each query to sum 1
  std::vector<T> vm(match_stack.count());
  for (int64_t p = 0; p < match_stack.count(); ++p)
    vm[p] = match_stack.valid[p] ? T(1) : T(0);
  Tensor<T> keep =
      Tensor<T>::from({1, match_stack.count(), 1, 1}, std::move(vm));
  Tensor<T> masked = mul(sc.scores, keep);
  sc.scores = div(masked, reduce_sum(masked, {1}));

  PatchStack<T> paste_stack = match_stack;
  int64_t paste_stride = r;
  if (r > 1) {
    // full-resolution patches on the same lattice; the center validity is
    // identical because the downscale keeps each block's top-left pixel
    paste_stack =
        extract_patches(bg, mask_known, cfg.patch_size, cfg.extract_stride * r);
  }

  Tensor<T> out = paste(sc.scores, paste_stack, h, w, paste_stride);
  return AttentionResult<T>{std::move(out), std::move(sc)};
}

// Maps each query's argmax offset onto the standard flow color wheel:
// direction -> hue, magnitude -> saturation (scaled by the image max), zero
// offset -> white. Returns (1, 3, qh, qw) in [0, 1].
template <typename T>
Tensor<T> attention_to_color(const AttentionScores<T>& sc) {
  const Tensor<T>& s = sc.scores;
  int64_t np = s.dim(1), qh = s.dim(2), qw = s.dim(3);
  check(np == sc.grid_h * sc.grid_w, "attention_to_color: lattice mismatch");
  std::vector<double> dx(qh * qw), dy(qh * qw);
  double max_mag = 0;
  const T* ps = s.ptr();
  int64_t plane = qh * qw;
  for (int64_t qy = 0; qy < qh; ++qy)
    for (int64_t qx = 0; qx < qw; ++qx) {
      int64_t best = 0;
      T bv = ps[qy * qw + qx];
      for (int64_t p = 1; p < np; ++p) {
        T v = ps[p * plane + qy * qw + qx];
        if (v > bv) {
          bv = v;
          best = p;
        }
      }
      int64_t cy = (best / sc.grid_w) * sc.lattice_step;
      int64_t cx = (best % sc.grid_w) * sc.lattice_step;
      double ox = static_cast<double>(cx - qx);
      double oy = static_cast<double>(cy - qy);
      dx[qy * qw + qx] = ox;
      dy[qy * qw + qx] = oy;
      max_mag = std::max(max_mag, std::hypot(ox, oy));
    }
  Tensor<T> img = Tensor<T>::zeros({1, 3, qh, qw});
  T* pi = img.ptr();
  for (int64_t q = 0; q < qh * qw; ++q) {
    double mag = std::hypot(dx[q], dy[q]);
    double sat = max_mag > 0 ? mag / max_mag : 0.0;
    double ang = std::atan2(dy[q], dx[q]);  // [-pi, pi]
    double hue = (ang + std::numbers::pi) / (2 * std::numbers::pi);  // [0,1]
    double hh = hue * 6.0;
    int sector = static_cast<int>(hh) % 6;
    double f = hh - std::floor(hh);
    double v = 1.0, p = v * (1 - sat);
    double qq = v * (1 - sat * f), t = v * (1 - sat * (1 - f));
    double r, g, b;
    switch (sector) {
      case 0: r = v; g = t; b = p; break;
      case 1: r = qq; g = v; b = p; break;
      case 2: r = p; g = v; b = t; break;
      case 3: r = p; g = qq; b = v; break;
      case 4: r = t; g = p; b = v; break;
      default: r = v; g = p; b = qq; break;
    }
    pi[q] = static_cast<T>(r);
    pi[plane + q] = static_cast<T>(g);
    pi[2 * plane + q] = static_cast<T>(b);
  }
  return img;
}

}  // namespace cain
