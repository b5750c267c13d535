#pragma once

#include <cstdint>

#include "cain/ops.h"
#include "cain/rng.h"

namespace cain {

struct Rect {
  int64_t top = 0, left = 0, h = 0, w = 0;

  bool contains(int64_t y, int64_t x) const {
    return y >= top && y < top + h && x >= left && x < left + w;
  }
  bool contains(const Rect& o) const {
    return o.top >= top && o.left >= left && o.top + o.h <= top + h &&
           o.left + o.w <= left + w;
  }
  bool operator==(const Rect& o) const = default;
};

// Outer box: the fixed-size region the local critic sees. Inner box: the
// hole actually corrupted, nested inside the outer box.
struct MaskPair {
  Rect outer;
  Rect inner;
  int64_t image_h = 0, image_w = 0;
};

// Binary mask (1,1,H,W): 1 = known pixel, 0 = missing.
template <typename T>
Tensor<T> mask_tensor(int64_t H, int64_t W, const Rect& hole) {
  check(hole.top >= 0 && hole.left >= 0 && hole.top + hole.h <= H &&
            hole.left + hole.w <= W,
        "mask_tensor: hole exceeds the image bounds");
  Tensor<T> m = Tensor<T>::ones({1, 1, H, W});
  T* p = m.ptr();
  for (int64_t y = hole.top; y < hole.top + hole.h; ++y)
    for (int64_t x = hole.left; x < hole.left + hole.w; ++x) p[y * W + x] = 0;
  return m;
}

// Draw order is part of the determinism contract: outer top, outer left,
// inner height, inner width, inner top, inner left.
inline MaskPair sample_mask_pair(Rng& rng, int64_t H, int64_t W,
                                 int64_t h_max, int64_t w_max) {
  check(h_max >= 1 && w_max >= 1 && h_max <= H && w_max <= W,
        "sample_mask_pair: box " + std::to_string(h_max) + "x" +
            std::to_string(w_max) + " does not fit in " + std::to_string(H) +
            "x" + std::to_string(W));
  MaskPair p;
  p.image_h = H;
  p.image_w = W;
  p.outer.h = h_max;
  p.outer.w = w_max;
  p.outer.top = rng.uniform_int(0, H - h_max);
  p.outer.left = rng.uniform_int(0, W - w_max);
  int64_t h_lo = (3 * h_max + 3) / 4;  // ceil(3h/4)
  int64_t w_lo = (3 * w_max + 3) / 4;
  p.inner.h = rng.uniform_int(h_lo, h_max);
  p.inner.w = rng.uniform_int(w_lo, w_max);
  p.inner.top = p.outer.top + rng.uniform_int(0, h_max - p.inner.h);
  p.inner.left = p.outer.left + rng.uniform_int(0, w_max - p.inner.w);
  return p;
}

template <typename T>
Tensor<T> inverse_mask(const Tensor<T>& m) {
  return add_scalar(neg(m), T(1));
}

// z = x ⊙ m: hole pixels become exactly 0 (mid-gray in [-1,1] coding).
template <typename T>
Tensor<T> corrupt(const Tensor<T>& x, const Tensor<T>& m) {
  return mul(x, m);
}

// x̃ = z + x_pred ⊙ (1−m): known pixels from z, hole pixels from the
// prediction. With z = corrupt(x, m) this reconstructs x bit-exactly.
template <typename T>
Tensor<T> complete(const Tensor<T>& z, const Tensor<T>& x_pred,
                   const Tensor<T>& m) {
  return add(z, mul(x_pred, inverse_mask(m)));
}

template <typename T>
Tensor<T> crop_outer(const Tensor<T>& img, const MaskPair& p) {
  check(img.dim(2) == p.image_h && img.dim(3) == p.image_w,
        "crop_outer: image dims " + shape_str(img.dims()) +
            " do not match the mask geometry");
  return crop_spatial(img, p.outer.top, p.outer.left, p.outer.h, p.outer.w);
}

}  // namespace cain
