#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "cain/masking.h"
#include "cain/ops.h"
#include "cain/tape.h"

namespace cain {

// Weight map (1,1,h,w): inside the hole, gamma^l where l is the pixel's
// distance to the nearest hole side; zero on known pixels. Computed with
// scalar pow so the values are exact powers.
template <typename T>
Tensor<T> build_discount_mask(int64_t h, int64_t w, const Rect& hole,
                              double gamma) {
  check(hole.h > 0 && hole.w > 0, "build_discount_mask: empty hole");
  check(hole.top >= 0 && hole.left >= 0 && hole.top + hole.h <= h &&
            hole.left + hole.w <= w,
        "build_discount_mask: hole outside image");
  check(gamma > 0 && gamma <= 1, "build_discount_mask: gamma must be in (0,1]");
  Tensor<T> m = Tensor<T>::zeros({1, 1, h, w});
  T* p = m.ptr();
  for (int64_t y = hole.top; y < hole.top + hole.h; ++y)
    for (int64_t x = hole.left; x < hole.left + hole.w; ++x) {
      int64_t i = y - hole.top, j = x - hole.left;
      int64_t l = std::min(std::min(i, hole.h - 1 - i),
                           std::min(j, hole.w - 1 - j));
      p[y * w + x] = static_cast<T>(std::pow(gamma, static_cast<double>(l)));
    }
  return m;
}

// Σ M·|pred − target| / Σ M
template <typename T>
Tensor<T> discounted_l1(const Tensor<T>& pred, const Tensor<T>& target,
                        const Tensor<T>& M) {
  check(pred.dims() == target.dims(),
        "discounted_l1: pred " + shape_str(pred.dims()) + " vs target " +
            shape_str(target.dims()));
  double msum = 0;
  for (T v : M.data()) msum += static_cast<double>(v);
  check(msum > 0, "discounted_l1: weight mask sums to zero");
  // normalize by the sum of the weights as broadcast against pred, so a
  // single-channel mask over an RGB image still averages per element
  Tensor<T> num = sum_all(mul(M, abs(sub(pred, target))));
  double repeat = static_cast<double>(pred.numel()) / M.numel();
  return scale(num, static_cast<T>(1.0 / (msum * repeat)));
}

// mean(d_fake) − mean(d_real); the critic minimizes this.
template <typename T>
Tensor<T> critic_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  return sub(mean_all(d_fake), mean_all(d_real));
}

template <typename T>
Tensor<T> generator_adv_loss(const Tensor<T>& d_fake) {
  return neg(mean_all(d_fake));
}

struct GpConfig {
  double lambda_gp = 10.0;
};

// λ · mean_n (‖∇_x̂ D(x̂) ⊙ (1−m)‖₂ − 1)² with x̂ a fresh per-sample
// interpolate between real and fake. The inner gradient is taken with graph
// recording on, so the result is differentiable w.r.t. critic parameters.
template <typename T>
Tensor<T> gradient_penalty(
    const std::function<Tensor<T>(const Tensor<T>&)>& critic,
    const Tensor<T>& x_real, const Tensor<T>& x_fake,
    const Tensor<T>& mask_known, const GpConfig& cfg, Rng& rng) {
  check(cfg.lambda_gp > 0, "gradient_penalty: lambda must be positive");
  check(x_real.dims() == x_fake.dims(),
        "gradient_penalty: real " + shape_str(x_real.dims()) + " vs fake " +
            shape_str(x_fake.dims()));
  int64_t n = x_real.dim(0);
  {
    double holes = 0;
    for (T v : mask_known.data()) holes += 1.0 - static_cast<double>(v);
    check(holes > 0, "gradient_penalty: mask has no hole");
  }

  // a graph is needed for the inner derivative; reuse the caller's tape when
  // one is open (so the result stays differentiable for the critic update),
  // otherwise record on a private one just long enough to evaluate
  std::optional<TapeScope<T>> local_scope;
  if (!recording<T>()) local_scope.emplace();

  // interpolate outside the tape; x̂ enters as a fresh leaf
  Tensor<T> xhat = Tensor<T>::zeros(x_real.dims());
  {
    int64_t per = x_real.numel() / n;
    const T* pr = x_real.ptr();
    const T* pf = x_fake.ptr();
    T* ph = xhat.ptr();
    for (int64_t i = 0; i < n; ++i) {
      T t = static_cast<T>(rng.uniform());
      for (int64_t j = 0; j < per; ++j)
        ph[i * per + j] =
            (T(1) - t) * pr[i * per + j] + t * pf[i * per + j];
    }
  }
  xhat.set_requires_grad(true);

  Tensor<T> d = critic(xhat);
  Tensor<T> g = grad(sum_all(d), {xhat}, /*create_graph=*/true)[0];
  Tensor<T> masked = mul(g, inverse_mask(mask_known));
  Tensor<T> sq = reduce_sum(square(masked), {1, 2, 3});
  Tensor<T> norm = sqrt(add_scalar(sq, T(1e-12)));
  Tensor<T> pen = mean_all(square(add_scalar(norm, T(-1))));
  return scale(pen, static_cast<T>(cfg.lambda_gp));
}

struct EvalMetrics {
  double l1_pct = 0;
  double l2_pct = 0;
  double psnr = 0;  // +inf when images are identical
  double tv = 0;
};

// Full-image statistics in [0,1] units: u = (x+1)/2.
template <typename T>
EvalMetrics eval_metrics(const Tensor<T>& x, const Tensor<T>& xt) {
  check(x.dims() == xt.dims(), "eval_metrics: dims differ");
  check(x.rank() == 4, "eval_metrics: rank-4 required");
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const T* pa = x.ptr();
  const T* pb = xt.ptr();
  double s1 = 0, s2 = 0;
  int64_t count = x.numel();
  for (int64_t i = 0; i < count; ++i) {
    double d = (static_cast<double>(pa[i]) - static_cast<double>(pb[i])) / 2.0;
    s1 += std::abs(d);
    s2 += d * d;
  }
  EvalMetrics m;
  m.l1_pct = 100.0 * s1 / count;
  m.l2_pct = 100.0 * s2 / count;
  m.psnr = s2 == 0 ? std::numeric_limits<double>::infinity()
                   : -10.0 * std::log10(m.l2_pct / 100.0);

  double tv = 0;
  int64_t pairs = 0;
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < c; ++ic) {
      const T* pl = pa + (in * c + ic) * h * w;  // smoothness of x itself
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx + 1 < w; ++xx)
          tv += std::abs(static_cast<double>(pl[y * w + xx + 1]) -
                         static_cast<double>(pl[y * w + xx])) /
                2.0;
      for (int64_t y = 0; y + 1 < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx)
          tv += std::abs(static_cast<double>(pl[(y + 1) * w + xx]) -
                         static_cast<double>(pl[y * w + xx])) /
                2.0;
      pairs += h * (w - 1) + (h - 1) * w;
    }
  m.tv = pairs > 0 ? 100.0 * tv / pairs : 0.0;
  return m;
}

}  // namespace cain
