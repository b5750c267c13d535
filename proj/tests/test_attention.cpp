#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cain/attention.h"
#include "cain/masking.h"
#include "cain/oracle.h"
#include "test_util.h"

using namespace cain;

namespace {

TensorD randt(Rng& rng, Shape d) {
  return TensorD::uniform(std::move(d), rng, -1.0, 1.0);
}

}  // namespace

TEST_CASE("patch extraction covers the lattice with validity flags") {
  Rng rng(1);
  TensorD bg = randt(rng, {1, 2, 6, 6});
  TensorD mask = mask_tensor<double>(6, 6, {2, 2, 2, 3});
  PatchStack<double> st = extract_patches(bg, mask, 3, 1);
  CHECK_EQ(st.grid_h, 6);
  CHECK_EQ(st.grid_w, 6);
  CHECK_EQ(st.count(), 36);
  CHECK_EQ(st.patches.dims(), Shape{36, 2, 3, 3});
  CHECK_EQ(st.valid_count(), 36 - 6);
  // interior patch copies the window
  int64_t p = 3 * 6 + 4;  // center (3,4) — inside image, outside hole? (3,4) is in hole rows 2..3, cols 2..4
  CHECK_EQ(st.valid[p], 0);
  p = 1 * 6 + 1;
  CHECK_EQ(st.valid[p], 1);
  for (int64_t dy = 0; dy < 3; ++dy)
    for (int64_t dx = 0; dx < 3; ++dx)
      CHECK_EQ(st.patches.at(p, 1, dy, dx), bg.at(0, 1, dy, dx));
}

TEST_CASE("border patches are zero padded") {
  Rng rng(2);
  TensorD bg = randt(rng, {1, 1, 4, 4});
  TensorD mask = TensorD::ones({1, 1, 4, 4});
  PatchStack<double> st = extract_patches(bg, mask, 3, 1);
  // corner patch (0,0): first row and column fall outside
  CHECK_EQ(st.patches.at(0, 0, 0, 0), 0.0);
  CHECK_EQ(st.patches.at(0, 0, 0, 1), 0.0);
  CHECK_EQ(st.patches.at(0, 0, 1, 0), 0.0);
  CHECK_EQ(st.patches.at(0, 0, 1, 1), bg.at(0, 0, 0, 0));
}

TEST_CASE("stride-2 lattice") {
  Rng rng(3);
  TensorD bg = randt(rng, {1, 1, 8, 8});
  TensorD mask = TensorD::ones({1, 1, 8, 8});
  PatchStack<double> st = extract_patches(bg, mask, 3, 2);
  CHECK_EQ(st.grid_h, 4);
  CHECK_EQ(st.count(), 16);
  CHECK_EQ(st.patches.at(5, 0, 1, 1), bg.at(0, 0, 2, 2));  // center (2,2)
}

TEST_CASE("a hole covering every center is rejected") {
  TensorD bg = TensorD::ones({1, 1, 4, 4});
  TensorD mask = TensorD::zeros({1, 1, 4, 4});
  CHECK_THROWS_AS(extract_patches(bg, mask, 3, 1), Error);
}

TEST_CASE("non-binary masks are rejected") {
  TensorD bg = TensorD::ones({1, 1, 4, 4});
  TensorD mask = TensorD::full({1, 1, 4, 4}, 0.5);
  CHECK_THROWS_AS(extract_patches(bg, mask, 3, 1), Error);
}

TEST_CASE("extraction gradient is the scatter adjoint") {
  Rng rng(4);
  TensorD bg = randt(rng, {1, 2, 5, 5});
  TensorD mask = TensorD::ones({1, 1, 5, 5});
  TensorD sel = randt(rng, {25, 2, 3, 3});
  TensorD g;
  {
    TapeScope<double> scope;
    bg.set_requires_grad(true);
    PatchStack<double> st = extract_patches(bg, mask, 3, 1);
    backward(sum_all(mul(st.patches, sel)));
    g = bg.grad();
    bg.set_requires_grad(false);
  }
  TensorD fd = finite_diff_grad(
      [&](const TensorD& t) {
        PatchStack<double> st = extract_patches(t, mask, 3, 1);
        return sum_all(mul(st.patches, sel)).item();
      },
      bg, 1e-5);
  CHECK_LT(norm_rel_diff(g, fd), 1e-9);
}

TEST_CASE("matching finds an exactly repeated patch") {
  // bg has a distinctive block copied in two places; the fg query equal to
  // that block must score ~1 on both copies and strictly less elsewhere
  TensorD bg = TensorD::zeros({1, 1, 8, 8});
  Rng rng(5);
  for (int64_t y = 0; y < 3; ++y)
    for (int64_t x = 0; x < 3; ++x) {
      double v = rng.uniform(0.5, 1.0);
      bg.at(0, 0, 1 + y, 1 + x) = v;
      bg.at(0, 0, 4 + y, 4 + x) = v;
    }
  TensorD mask = TensorD::ones({1, 1, 8, 8});
  PatchStack<double> st = extract_patches(bg, mask, 3, 1);
  TensorD scores = match_scores(bg, st);
  CHECK_EQ(scores.dims(), Shape{1, 64, 8, 8});
  // query at (2,2) = center of the first block: patches centered (2,2) and
  // (5,5) match perfectly
  double best = scores.at(0, 2 * 8 + 2, 2, 2);
  CHECK_EQ(best, doctest::Approx(1.0).epsilon(1e-9));
  CHECK_EQ(scores.at(0, 5 * 8 + 5, 2, 2), doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("invalid patches carry the sentinel score") {
  Rng rng(6);
  TensorD bg = randt(rng, {1, 2, 6, 6});
  TensorD mask = mask_tensor<double>(6, 6, {2, 2, 2, 2});
  PatchStack<double> st = extract_patches(bg, mask, 3, 1);
  TensorD scores = match_scores(mul(bg, mask), st);
  CHECK_EQ(scores.at(0, 2 * 6 + 2, 0, 0), kInvalidScoreSentinel);
  CHECK_EQ(scores.at(0, 3 * 6 + 3, 5, 5), kInvalidScoreSentinel);
}

TEST_CASE("attend yields a distribution with invalid patches at exact zero") {
  Rng rng(7);
  TensorD bg = randt(rng, {1, 2, 6, 6});
  TensorD mask = mask_tensor<double>(6, 6, {1, 1, 3, 3});
  PatchStack<double> st = extract_patches(bg, mask, 3, 1);
  TensorD w = attend(match_scores(mul(bg, mask), st), 10.0);
  for (int64_t qy = 0; qy < 6; ++qy)
    for (int64_t qx = 0; qx < 6; ++qx) {
      double sum = 0;
      for (int64_t p = 0; p < 36; ++p) {
        double v = w.at(0, p, qy, qx);
        REQUIRE(v >= 0.0);
        if (!st.valid[p]) REQUIRE(v == 0.0);
        sum += v;
      }
      CHECK_EQ(sum, doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("propagation: k=0 is the identity") {
  Rng rng(8);
  AttentionScores<double> s;
  s.scores = randt(rng, {1, 16, 4, 4});
  s.grid_h = s.grid_w = 4;
  s.lattice_step = 1;
  TensorD out = propagate(s, 0).scores;
  CHECK_EQ(max_abs_diff(out, s.scores), 0.0);
}

TEST_CASE("propagation: delta spreads along the diagonal band") {
  // single mass at patch (1,1), query (1,1); radius 1 with unit lattice step:
  // after the horizontal then vertical passes, entries appear at the nine
  // jointly-shifted (patch, query) combinations
  AttentionScores<double> s;
  s.scores = TensorD::zeros({1, 9, 3, 3});
  s.grid_h = s.grid_w = 3;
  s.lattice_step = 1;
  s.scores.at(0, 1 * 3 + 1, 1, 1) = 1.0;
  TensorD out = propagate(s, 1).scores;
  for (int64_t dy = -1; dy <= 1; ++dy)
    for (int64_t dx = -1; dx <= 1; ++dx)
      CHECK_EQ(out.at(0, (1 + dy) * 3 + (1 + dx), 1 + dy, 1 + dx), 1.0);
  double total = 0;
  for (double v : out.data()) total += v;
  CHECK_EQ(total, 9.0);
}

TEST_CASE("propagation is self-adjoint") {
  Rng rng(9);
  TensorD x = randt(rng, {1, 12, 5, 4});
  TensorD y = randt(rng, {1, 12, 5, 4});
  auto run = [&](const TensorD& t) {
    AttentionScores<double> s;
    s.scores = t;
    s.grid_h = 3;
    s.grid_w = 4;
    s.lattice_step = 1;
    return propagate(s, 2).scores;
  };
  double lhs = sum_all(mul(run(x), y)).item();
  double rhs = sum_all(mul(x, run(y))).item();
  CHECK_EQ(lhs, doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("propagation matches the literal double sum exactly") {
  Rng rng(10);
  TensorD x = TensorD::uniform({1, 20, 6, 7}, rng, 0.0, 1.0);
  AttentionScores<double> s;
  s.scores = x;
  s.grid_h = 4;
  s.grid_w = 5;
  s.lattice_step = 1;
  TensorD a = propagate(s, 2).scores;
  TensorD b = naive_propagate(x, 2, 1, 4, 5);
  CHECK_EQ(max_abs_diff(a, b), 0.0);

  s.lattice_step = 2;
  TensorD c = propagate(s, 3).scores;
  TensorD d = naive_propagate(x, 3, 2, 4, 5);
  CHECK_EQ(max_abs_diff(c, d), 0.0);
}

TEST_CASE("one-hot self-attention pastes the background back") {
  Rng rng(11);
  TensorD bg = randt(rng, {1, 2, 6, 6});
  TensorD mask = TensorD::ones({1, 1, 6, 6});
  PatchStack<double> st = extract_patches(bg, mask, 3, 1);
  TensorD scores = TensorD::zeros({1, 36, 6, 6});
  for (int64_t qy = 0; qy < 6; ++qy)
    for (int64_t qx = 0; qx < 6; ++qx)
      scores.at(0, qy * 6 + qx, qy, qx) = 1.0;  // each query picks itself
  TensorD out = paste(scores, st, 6, 6, 1);
  CHECK_LT(max_abs_diff(out, bg), 1e-12);
}

TEST_CASE("paste averages by coverage") {
  // constant patches with uniform scores: output is constant regardless of
  // the differing overlap counts at borders
  TensorD bg = TensorD::full({1, 1, 5, 5}, 2.0);
  TensorD mask = TensorD::ones({1, 1, 5, 5});
  PatchStack<double> st = extract_patches(bg, mask, 3, 1);
  // single patch one-hot: pick the interior patch at (2,2) whose window has
  // no zero padding
  TensorD scores = TensorD::zeros({1, 25, 5, 5});
  for (int64_t qy = 0; qy < 5; ++qy)
    for (int64_t qx = 0; qx < 5; ++qx) scores.at(0, 2 * 5 + 2, qy, qx) = 1.0;
  TensorD out = paste(scores, st, 5, 5, 1);
  for (double v : out.data()) CHECK_EQ(v, doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("paste rejects stride wider than the patch") {
  TensorD bg = TensorD::ones({1, 1, 8, 8});
  TensorD mask = TensorD::ones({1, 1, 8, 8});
  PatchStack<double> st = extract_patches(bg, mask, 3, 1);
  TensorD scores = TensorD::ones({1, 64, 2, 2});
  CHECK_THROWS_AS(paste(scores, st, 8, 8, 4), Error);
}

TEST_CASE("full layer output shape and weight properties") {
  Rng rng(12);
  TensorD bg = randt(rng, {1, 3, 8, 8});
  TensorD mask = mask_tensor<double>(8, 8, {2, 2, 4, 4});
  AttentionConfig cfg;
  AttentionResult<double> res =
      contextual_attention(mul(bg, mask), bg, mask, cfg);
  CHECK_EQ(res.output.dims(), Shape{1, 3, 8, 8});
  CHECK_EQ(res.scores.scores.dims(), Shape{1, 64, 8, 8});
  for (int64_t qy = 0; qy < 8; ++qy)
    for (int64_t qx = 0; qx < 8; ++qx) {
      double sum = 0;
      for (int64_t p = 0; p < 64; ++p) {
        double v = res.scores.scores.at(0, p, qy, qx);
        REQUIRE(v >= 0.0);
        if (!res.scores.valid[p]) REQUIRE(v == 0.0);
        sum += v;
      }
      CHECK_EQ(sum, doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("downscaled matching still pastes at full resolution") {
  Rng rng(13);
  TensorD bg = randt(rng, {1, 2, 12, 12});
  TensorD mask = mask_tensor<double>(12, 12, {4, 4, 4, 4});
  AttentionConfig cfg;
  cfg.downscale_rate = 2;
  AttentionResult<double> res =
      contextual_attention(mul(bg, mask), bg, mask, cfg);
  CHECK_EQ(res.output.dims(), Shape{1, 2, 12, 12});
  CHECK_EQ(res.scores.scores.dims(), Shape{1, 36, 6, 6});
  AttentionConfig bad = cfg;
  TensorD odd = randt(rng, {1, 2, 9, 9});
  CHECK_THROWS_AS(
      contextual_attention(odd, odd, TensorD::ones({1, 1, 9, 9}), bad), Error);
}

TEST_CASE("joint translation shifts the argmax map") {
  Rng rng(14);
  TensorD big = randt(rng, {1, 1, 10, 10});
  auto crop = [&](int64_t dy, int64_t dx) {
    TensorD out = TensorD::zeros({1, 1, 8, 8});
    for (int64_t y = 0; y < 8; ++y)
      for (int64_t x = 0; x < 8; ++x)
        out.at(0, 0, y, x) = big.at(0, 0, y + dy, x + dx);
    return out;
  };
  TensorD mask = TensorD::ones({1, 1, 8, 8});
  AttentionConfig cfg;
  cfg.prop_radius = 0;
  NaiveAttention a = naive_attention(crop(0, 0), crop(0, 0), mask, cfg);
  NaiveAttention b = naive_attention(crop(1, 1), crop(1, 1), mask, cfg);
  // interior queries see identical neighborhoods, so the winning patch
  // offset (patch center minus query) must agree
  int interior_checked = 0;
  for (int64_t qy = 2; qy < 6; ++qy)
    for (int64_t qx = 2; qx < 6; ++qx) {
      int64_t pa = a.argmax[qy * 8 + qx], pb = b.argmax[qy * 8 + qx];
      int64_t oya = pa / 8 - qy, oxa = pa % 8 - qx;
      int64_t oyb = pb / 8 - qy, oxb = pb % 8 - qx;
      if (oya == oyb && oxa == oxb) ++interior_checked;
    }
  CHECK_GE(interior_checked, 14);  // allow a couple of near-tie flips
}

TEST_CASE("gradients flow through the full layer") {
  Rng rng(15);
  TensorD bg = randt(rng, {1, 2, 8, 8});
  TensorD mask = mask_tensor<double>(8, 8, {3, 3, 3, 3});
  AttentionConfig cfg;
  TensorD sel = randt(rng, {1, 2, 8, 8});
  auto loss = [&](const TensorD& b) {
    return sum_all(
        mul(contextual_attention(mul(b, mask), b, mask, cfg).output, sel));
  };
  TensorD g;
  {
    TapeScope<double> scope;
    bg.set_requires_grad(true);
    backward(loss(bg));
    g = bg.grad();
    bg.set_requires_grad(false);
  }
  TensorD fd = finite_diff_grad(
      [&](const TensorD& t) { return loss(t).item(); }, bg, 1e-5);
  CHECK_LT(norm_rel_diff(g, fd), 1e-6);
}

TEST_CASE("attention color map: self-attention is white") {
  AttentionScores<double> sc;
  sc.scores = TensorD::zeros({1, 16, 4, 4});
  sc.grid_h = sc.grid_w = 4;
  sc.lattice_step = 1;
  for (int64_t qy = 0; qy < 4; ++qy)
    for (int64_t qx = 0; qx < 4; ++qx)
      sc.scores.at(0, qy * 4 + qx, qy, qx) = 1.0;
  TensorD img = attention_to_color(sc);
  CHECK_EQ(img.dims(), Shape{1, 3, 4, 4});
  for (double v : img.data()) CHECK_EQ(v, 1.0);
}

TEST_CASE("attention color map encodes offset direction") {
  AttentionScores<double> sc;
  sc.scores = TensorD::zeros({1, 16, 4, 4});
  sc.grid_h = sc.grid_w = 4;
  sc.lattice_step = 1;
  // every query attends to patch (0,0): offsets vary, so saturation varies
  for (int64_t qy = 0; qy < 4; ++qy)
    for (int64_t qx = 0; qx < 4; ++qx) sc.scores.at(0, 0, qy, qx) = 1.0;
  TensorD img = attention_to_color(sc);
  // the query at (0,0) has zero offset -> white; the far corner is saturated
  CHECK_EQ(img.at(0, 0, 0, 0), 1.0);
  CHECK_EQ(img.at(0, 1, 0, 0), 1.0);
  CHECK_EQ(img.at(0, 2, 0, 0), 1.0);
  double mn = 1.0;
  for (int64_t c = 0; c < 3; ++c) mn = std::min(mn, img.at(0, c, 3, 3));
  CHECK_LT(mn, 0.5);  // strongly colored
}
