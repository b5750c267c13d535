#include "cain/oracle.h"

#include <cstdio>

#include "cain/conv.h"
#include "cain/losses.h"
#include "cain/masking.h"
#include "cain/tape.h"

namespace cain {

std::string OracleReport::line() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "CASE %s max_abs=%.3e max_rel=%.3e %s",
                id.c_str(), max_abs, max_rel, pass ? "PASS" : "FAIL");
  return buf;
}

namespace {

TensorD rand_tensor(Rng& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(dims));
  for (double& x : v) x = rng.uniform(lo, hi);
  return TensorD::from(std::move(dims), std::move(v));
}

void perturb(TensorD& t, double amount) {
  if (amount != 0.0) t.ptr()[0] += amount;
}

// ---- convolution equivalence ------------------------------------------

OracleReport conv_case(const std::string& id, uint64_t seed, Shape xd,
                       Shape wd, int64_t s, int64_t d, int64_t p,
                       double perturbation) {
  Rng rng(seed);
  TensorD x = rand_tensor(rng, xd);
  TensorD w = rand_tensor(rng, wd);
  TensorD impl = conv_fwd(x, w, s, d, p);
  perturb(impl, perturbation);
  TensorD ref = naive_conv(x, w, s, d, p);
  return compare_tensors(id, impl, ref, 1e-12, 1e-6);
}

OracleReport conv_reflect_case(uint64_t seed, double perturbation) {
  Rng rng(seed);
  TensorD x = rand_tensor(rng, {2, 3, 9, 9});
  TensorD w = rand_tensor(rng, {4, 3, 3, 3});
  TensorD impl = conv2d(x, w, int64_t{1}, int64_t{2}, PaddingMode::kReflect);
  perturb(impl, perturbation);
  TensorD ref = naive_conv(naive_reflect_pad(x, 2), w, 1, 2, 0);
  return compare_tensors("conv-reflect-d2", impl, ref, 1e-12, 1e-6);
}

OracleReport conv_scatter_case(uint64_t seed, double perturbation) {
  Rng rng(seed);
  TensorD g = rand_tensor(rng, {2, 4, 5, 5});
  TensorD w = rand_tensor(rng, {4, 3, 3, 3});
  TensorD impl = conv_data_grad(g, w, int64_t{2}, int64_t{1}, int64_t{1},
                                int64_t{10}, int64_t{10});
  perturb(impl, perturbation);
  TensorD ref = naive_conv_data_grad(g, w, 2, 1, 1, 10, 10);
  return compare_tensors("conv-scatter-s2", impl, ref, 1e-12, 1e-6);
}

OracleReport conv_f32_case(const std::string& id, uint64_t seed, Shape xd,
                           Shape wd, int64_t s, int64_t d, int64_t p,
                           double perturbation) {
  Rng rng(seed);
  TensorD x64 = rand_tensor(rng, xd);
  TensorD w64 = rand_tensor(rng, wd);
  TensorF impl32 = conv_fwd(to_f32(x64), to_f32(w64), s, d, p);
  TensorD impl = to_f64(impl32);
  perturb(impl, perturbation);
  TensorD ref = naive_conv(x64, w64, s, d, p);
  return compare_tensors(id, impl, ref, 1e-5, 0.0);
}

// ---- attention equivalence --------------------------------------------

struct AttnCase {
  std::string id;
  uint64_t seed;
  int64_t size, channels;
  Rect hole;
  AttentionConfig cfg;
};

std::vector<AttnCase> attention_cases() {
  std::vector<AttnCase> cs;
  auto cfg = [](int64_t r, int64_t st, int64_t k, double sc) {
    AttentionConfig c;
    c.downscale_rate = r;
    c.extract_stride = st;
    c.prop_radius = k;
    c.softmax_scale = sc;
    return c;
  };
  cs.push_back({"attn-8-c2-base", 101, 8, 2, {2, 2, 4, 4}, cfg(1, 1, 2, 10)});
  cs.push_back({"attn-8-c3-offset", 102, 8, 3, {1, 3, 4, 3}, cfg(1, 1, 2, 10)});
  cs.push_back({"attn-8-c1-stride2", 103, 8, 1, {2, 2, 4, 4}, cfg(1, 2, 2, 10)});
  cs.push_back({"attn-8-noprop", 104, 8, 2, {2, 2, 4, 4}, cfg(1, 1, 0, 10)});
  cs.push_back({"attn-10-k3", 105, 10, 2, {3, 2, 5, 6}, cfg(1, 1, 3, 10)});
  cs.push_back({"attn-12-down2", 106, 12, 2, {4, 4, 6, 6}, cfg(2, 1, 2, 10)});
  cs.push_back({"attn-16-down2-stride2", 107, 16, 2, {4, 4, 8, 8},
                cfg(2, 2, 2, 10)});
  cs.push_back({"attn-16-c3-wide", 108, 16, 3, {2, 4, 10, 6}, cfg(1, 1, 2, 10)});
  cs.push_back({"attn-16-scale5", 109, 16, 2, {6, 6, 8, 8}, cfg(1, 1, 2, 5)});
  cs.push_back({"attn-8-nohole", 110, 8, 2, {0, 0, 0, 0}, cfg(1, 1, 2, 10)});
  return cs;
}

OracleReport attention_case(const AttnCase& ac, double perturbation) {
  Rng rng(ac.seed);
  TensorD bg = rand_tensor(rng, {1, ac.channels, ac.size, ac.size});
  TensorD mask = ac.hole.h > 0
                     ? mask_tensor<double>(ac.size, ac.size, ac.hole)
                     : TensorD::ones({1, 1, ac.size, ac.size});
  // queries come from the corrupted features, as in the network
  TensorD fg = mul(bg, mask);
  AttentionResult<double> impl = contextual_attention(fg, bg, mask, ac.cfg);
  TensorD impl_out = impl.output;
  perturb(impl_out, perturbation);
  NaiveAttention ref = naive_attention(fg, bg, mask, ac.cfg);
  return compare_tensors(ac.id, impl_out, ref.output, 1e-12, 1e-4);
}

OracleReport propagate_case(const std::string& id, uint64_t seed, int64_t gh,
                            int64_t gw, int64_t qh, int64_t qw, int64_t k,
                            int64_t step, double perturbation) {
  Rng rng(seed);
  TensorD x = rand_tensor(rng, {1, gh * gw, qh, qw}, 0.0, 1.0);
  AttentionScores<double> s;
  s.scores = x;
  s.grid_h = gh;
  s.grid_w = gw;
  s.lattice_step = step;
  TensorD impl = propagate(s, k).scores;
  perturb(impl, perturbation);
  TensorD ref = naive_propagate(x, k, step, gh, gw);
  return compare_tensors(id, impl, ref, 0.0, 0.0);  // exact
}

// ---- finite-difference gradient cases ---------------------------------

// max_rel here is the norm-relative error ‖tape − fd‖ / ‖fd‖.
OracleReport grad_report(const std::string& id, const TensorD& tape_grad,
                         const TensorD& fd_grad, double tol) {
  OracleReport rep;
  rep.id = id;
  rep.tol_rel = tol;
  check(tape_grad.dims() == fd_grad.dims(), "grad_report: dims differ");
  auto a = tape_grad.data();
  auto b = fd_grad.data();
  double dd = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    dd += d * d;
    nb += b[i] * b[i];
    rep.max_abs = std::max(rep.max_abs, std::abs(d));
  }
  rep.max_rel = std::sqrt(dd) / (std::sqrt(nb) + 1e-30);
  rep.pass = rep.max_rel <= tol;
  return rep;
}

std::vector<OracleReport> fd_conv_elu_mean(double perturbation) {
  Rng rng(201);
  TensorD x = rand_tensor(rng, {1, 2, 6, 6});
  TensorD w = rand_tensor(rng, {3, 2, 3, 3}, -0.5, 0.5);
  auto loss = [&](const TensorD& xx, const TensorD& ww) {
    return mean_all(elu(conv2d(xx, ww, int64_t{1}, int64_t{1},
                               PaddingMode::kReflect)));
  };
  TensorD gx, gw;
  {
    TapeScope<double> scope;
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    TensorD l = loss(x, w);
    backward(l);
    gx = TensorD::from(x.dims(),
                       std::vector<double>(x.grad_data().begin(),
                                           x.grad_data().end()));
    gw = TensorD::from(w.dims(),
                       std::vector<double>(w.grad_data().begin(),
                                           w.grad_data().end()));
    x.set_requires_grad(false);
    w.set_requires_grad(false);
  }
  perturb(gx, perturbation);
  TensorD fdx = finite_diff_grad(
      [&](const TensorD& p) { return loss(p, w).item(); }, x, 1e-4);
  TensorD fdw = finite_diff_grad(
      [&](const TensorD& p) { return loss(x, p).item(); }, w, 1e-4);
  return {grad_report("fd-conv-elu-mean-x", gx, fdx, 1e-6),
          grad_report("fd-conv-elu-mean-w", gw, fdw, 1e-6)};
}

OracleReport fd_attention_mean(double perturbation) {
  Rng rng(202);
  TensorD bg = rand_tensor(rng, {1, 2, 8, 8});
  TensorD mask = mask_tensor<double>(8, 8, {2, 2, 4, 4});
  AttentionConfig cfg;
  auto loss = [&](const TensorD& b) {
    return mean_all(contextual_attention(mul(b, mask), b, mask, cfg).output);
  };
  TensorD g;
  {
    TapeScope<double> scope;
    bg.set_requires_grad(true);
    backward(loss(bg));
    g = TensorD::from(bg.dims(),
                      std::vector<double>(bg.grad_data().begin(),
                                          bg.grad_data().end()));
    bg.set_requires_grad(false);
  }
  perturb(g, perturbation);
  TensorD fd = finite_diff_grad(
      [&](const TensorD& p) { return loss(p).item(); }, bg, 1e-4);
  return grad_report("fd-attention-mean", g, fd, 1e-6);
}

OracleReport fd_discounted_l1(double perturbation) {
  Rng rng(203);
  TensorD pred = rand_tensor(rng, {1, 3, 8, 8});
  TensorD target = rand_tensor(rng, {1, 3, 8, 8});
  TensorD M = build_discount_mask<double>(8, 8, {2, 2, 4, 4}, 0.99);
  TensorD g;
  {
    TapeScope<double> scope;
    pred.set_requires_grad(true);
    backward(discounted_l1(pred, target, M));
    g = TensorD::from(pred.dims(),
                      std::vector<double>(pred.grad_data().begin(),
                                          pred.grad_data().end()));
    pred.set_requires_grad(false);
  }
  perturb(g, perturbation);
  TensorD fd = finite_diff_grad(
      [&](const TensorD& p) {
        return discounted_l1(p, target, M).item();
      },
      pred, 1e-4);
  // |.| has kinks; the discount support is only the hole, so compare there
  return grad_report("fd-discounted-l1", g, fd, 1e-6);
}

OracleReport fd_gradient_penalty(double perturbation) {
  // linear critic with a trainable weight: D(x) = sum(w ⊙ x); checks the
  // recorded-backward (second order) path end to end
  Rng rng(204);
  TensorD real = rand_tensor(rng, {2, 1, 4, 4});
  TensorD fake = rand_tensor(rng, {2, 1, 4, 4});
  TensorD mask = mask_tensor<double>(4, 4, {1, 1, 2, 2});
  TensorD w = rand_tensor(rng, {1, 1, 4, 4});
  GpConfig cfg;
  auto penalty = [&](const TensorD& ww) {
    Rng inner(55);
    std::function<TensorD(const TensorD&)> critic =
        [&](const TensorD& x) {
          return reduce_sum(mul(x, ww), {1, 2, 3});
        };
    return gradient_penalty(critic, real, fake, mask, cfg, inner);
  };
  TensorD g;
  {
    TapeScope<double> scope;
    w.set_requires_grad(true);
    backward(penalty(w));
    g = TensorD::from(w.dims(),
                      std::vector<double>(w.grad_data().begin(),
                                          w.grad_data().end()));
    w.set_requires_grad(false);
  }
  perturb(g, perturbation);
  TensorD fd = finite_diff_grad(
      [&](const TensorD& p) { return penalty(p).item(); }, w, 1e-4);
  return grad_report("fd-gradient-penalty-w", g, fd, 1e-6);
}

}  // namespace

std::vector<OracleReport> run_oracle_suite(double perturbation) {
  std::vector<OracleReport> out;
  out.push_back(conv_case("conv-3x3-s1", 11, {2, 3, 9, 11}, {4, 3, 3, 3}, 1,
                          1, 1, perturbation));
  out.push_back(conv_case("conv-3x3-s2", 12, {1, 2, 8, 8}, {5, 2, 3, 3}, 2, 1,
                          1, perturbation));
  out.push_back(conv_case("conv-5x5-d2", 13, {1, 3, 12, 12}, {2, 3, 5, 5}, 1,
                          2, 4, perturbation));
  out.push_back(conv_case("conv-1x1-s3-p0", 14, {2, 4, 9, 9}, {3, 4, 1, 1}, 3,
                          1, 0, perturbation));
  out.push_back(conv_reflect_case(15, perturbation));
  out.push_back(conv_scatter_case(16, perturbation));
  out.push_back(conv_f32_case("conv-f32-3x3", 17, {1, 8, 16, 16},
                              {8, 8, 3, 3}, 1, 1, 1, perturbation));
  out.push_back(conv_f32_case("conv-f32-d4", 18, {1, 4, 16, 16}, {4, 4, 3, 3},
                              1, 4, 4, perturbation));
  for (const AttnCase& ac : attention_cases())
    out.push_back(attention_case(ac, perturbation));
  out.push_back(propagate_case("prop-exact-k2", 31, 6, 6, 6, 6, 2, 1,
                               perturbation));
  out.push_back(propagate_case("prop-exact-k3-step2", 32, 4, 5, 8, 10, 3, 2,
                               perturbation));
  out.push_back(propagate_case("prop-exact-k0", 33, 3, 3, 3, 3, 0, 1,
                               perturbation));
  for (OracleReport& r : fd_conv_elu_mean(perturbation)) out.push_back(r);
  out.push_back(fd_attention_mean(perturbation));
  out.push_back(fd_discounted_l1(perturbation));
  out.push_back(fd_gradient_penalty(perturbation));
  return out;
}

}  // namespace cain
