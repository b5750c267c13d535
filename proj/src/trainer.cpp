#include "cain/trainer.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cain/image.h"
#include "cain/losses.h"
#include "cain/masking.h"

namespace cain {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  check(image_size >= 16 && image_size % 4 == 0,
        "TrainConfig: image_size must be a multiple of 4, at least 16");
  check(hole_h == hole_w,
        "TrainConfig: hole box must be square (local critic input)");
  check(hole_h >= 8 && hole_h <= image_size,
        "TrainConfig: hole box must fit the image and be at least 8");
  check(batch >= 1, "TrainConfig: batch must be positive");
  check(critic_steps >= 1, "TrainConfig: critic_steps must be positive");
  check(total_steps >= 0, "TrainConfig: total_steps must be non-negative");
  check(lr > 0, "TrainConfig: lr must be positive");
  check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1,
        "TrainConfig: betas must lie in [0,1)");
  check(w_coarse_l1 >= 0 && w_refine_l1 >= 0 && w_adv_global >= 0 &&
            w_adv_local >= 0,
        "TrainConfig: loss weights must be non-negative");
  check(gamma > 0 && gamma <= 1, "TrainConfig: gamma must be in (0,1]");
  check(lambda_gp > 0, "TrainConfig: lambda_gp must be positive");
  check(ckpt_every >= 0 && sample_every >= 0,
        "TrainConfig: cadences must be non-negative (0 disables)");
  check(multiplier > 0, "TrainConfig: multiplier must be positive");
  attn.validate();
}

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

ArchSpec arch_for(const TrainConfig& cfg) {
  cfg.validate();
  ArchSpec a = default_arch(cfg.multiplier, cfg.image_size, cfg.hole_h);
  a.attention_enabled = cfg.attention_enabled;
  a.attn = cfg.attn;
  a.validate();
  return a;
}

// losses arrive with mixed ranks (critic heads are (n,1), penalties are
// rank 4); line them up before adding
Tensor<float> scalar4(const Tensor<float>& t) {
  return reshape(t, Shape{1, 1, 1, 1});
}

void split_u64(uint64_t v, double* lo, double* hi) {
  *lo = static_cast<double>(static_cast<uint32_t>(v & 0xffffffffull));
  *hi = static_cast<double>(static_cast<uint32_t>(v >> 32));
}

uint64_t join_u64(double lo, double hi) {
  return (static_cast<uint64_t>(std::llround(hi)) << 32) |
         static_cast<uint64_t>(std::llround(lo));
}

}  // namespace

std::string StepRecord::csv_header() {
  return "step,l1_coarse,l1_refine,adv_g,adv_l,gp_g,gp_l";
}

std::string StepRecord::csv_row() const {
  std::string row = std::to_string(step);
  for (double v : {l1_coarse, l1_refine, adv_g, adv_l, gp_g, gp_l})
    row += "," + fmt_g(v);
  return row;
}

Trainer::Trainer(const TrainConfig& cfg, std::vector<Tensor<float>> dataset)
    : cfg_(cfg),
      data_(std::move(dataset)),
      g_(arch_for(cfg), cfg.seed),
      dg_(arch_for(cfg).critic_global, cfg.image_size, 3, cfg.seed),
      dl_(arch_for(cfg).critic_local, cfg.hole_h, 3, cfg.seed + 1),
      opt_g_(g_.named_parameters(), cfg.lr, cfg.beta1, cfg.beta2),
      opt_dg_(dg_.named_parameters(), cfg.lr, cfg.beta1, cfg.beta2),
      opt_dl_(dl_.named_parameters(), cfg.lr, cfg.beta1, cfg.beta2),
      rng_(cfg.seed, 0) {
  check(!data_.empty(), "Trainer: empty dataset");
  for (const auto& t : data_)
    check(t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 3 &&
              t.dim(2) == cfg_.image_size && t.dim(3) == cfg_.image_size,
          "Trainer: dataset images must be (1,3," +
              std::to_string(cfg_.image_size) + "," +
              std::to_string(cfg_.image_size) + "), got " +
              shape_str(t.dims()));
}

Trainer::Batch Trainer::sample_batch() {
  int64_t H = cfg_.image_size, W = cfg_.image_size;
  std::vector<Tensor<float>> xs, ms;
  Batch b;
  for (int64_t i = 0; i < cfg_.batch; ++i) {
    int64_t idx = rng_.uniform_int(0, static_cast<int64_t>(data_.size()) - 1);
    MaskPair p = sample_mask_pair(rng_, H, W, cfg_.hole_h, cfg_.hole_w);
    xs.push_back(data_[static_cast<size_t>(idx)]);
    ms.push_back(mask_tensor<float>(H, W, p.inner));
    b.pairs.push_back(p);
  }
  b.x = concat_batch(xs);
  b.m = concat_batch(ms);
  return b;
}

Tensor<float> Trainer::crop_stack(const Tensor<float>& t,
                                  const std::vector<MaskPair>& pairs) const {
  std::vector<Tensor<float>> parts;
  parts.reserve(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    int64_t b = static_cast<int64_t>(i);
    parts.push_back(crop_outer(slice_batch(t, b, b + 1), pairs[i]));
  }
  return concat_batch(parts);
}

void Trainer::ensure_finite(double v, const char* what) const {
  if (!std::isfinite(v))
    throw Error(std::string("training diverged: ") + what +
                " is not finite at step " + std::to_string(step_ + 1));
}

void Trainer::critic_iteration(StepRecord& rec) {
  TapeScope<float> scope;
  opt_g_.zero_grads();
  opt_dg_.zero_grads();
  opt_dl_.zero_grads();

  Batch b = sample_batch();
  Tensor<float> xt;
  {
    NoGradScope<float> frozen;  // generator is a constant for the critic pass
    Tensor<float> z = corrupt(b.x, b.m);
    auto f = g_.forward(z, b.m);
    xt = complete(z, f.refined, b.m);
  }

  GpConfig gpc{cfg_.lambda_gp};
  Tensor<float> loss_g = critic_loss(dg_.forward(b.x), dg_.forward(xt));
  std::function<Tensor<float>(const Tensor<float>&)> run_global =
      [this](const Tensor<float>& t) { return dg_.forward(t); };
  Tensor<float> pen_g = gradient_penalty(run_global, b.x, xt, b.m, gpc, rng_);

  Tensor<float> xr = crop_stack(b.x, b.pairs);
  Tensor<float> xf = crop_stack(xt, b.pairs);
  Tensor<float> ml = crop_stack(b.m, b.pairs);
  Tensor<float> loss_l = critic_loss(dl_.forward(xr), dl_.forward(xf));
  std::function<Tensor<float>(const Tensor<float>&)> run_local =
      [this](const Tensor<float>& t) { return dl_.forward(t); };
  Tensor<float> pen_l = gradient_penalty(run_local, xr, xf, ml, gpc, rng_);

  Tensor<float> total = add(add(scalar4(loss_g), scalar4(pen_g)),
                            add(scalar4(loss_l), scalar4(pen_l)));
  backward(total);
  opt_dg_.step();
  opt_dl_.step();

  ensure_finite(loss_g.item(), "global critic loss");
  ensure_finite(loss_l.item(), "local critic loss");
  ensure_finite(pen_g.item(), "global gradient penalty");
  ensure_finite(pen_l.item(), "local gradient penalty");
  rec.gp_g += pen_g.item();
  rec.gp_l += pen_l.item();
}

void Trainer::generator_iteration(StepRecord& rec) {
  TapeScope<float> scope;
  opt_g_.zero_grads();
  opt_dg_.zero_grads();
  opt_dl_.zero_grads();

  Batch b = sample_batch();
  Tensor<float> z = corrupt(b.x, b.m);
  auto f = g_.forward(z, b.m);
  Tensor<float> xt = complete(z, f.refined, b.m);

  std::vector<Tensor<float>> ws;
  for (const MaskPair& p : b.pairs)
    ws.push_back(build_discount_mask<float>(cfg_.image_size, cfg_.image_size,
                                            p.inner, cfg_.gamma));
  Tensor<float> weights = concat_batch(ws);

  Tensor<float> l1c = discounted_l1(f.coarse, b.x, weights);
  Tensor<float> l1r = discounted_l1(xt, b.x, weights);
  Tensor<float> adv_g = generator_adv_loss(dg_.forward(xt));
  Tensor<float> adv_l = generator_adv_loss(dl_.forward(crop_stack(xt, b.pairs)));

  Tensor<float> total =
      add(add(scale(l1c, static_cast<float>(cfg_.w_coarse_l1)),
              scale(l1r, static_cast<float>(cfg_.w_refine_l1))),
          add(scale(scalar4(adv_g), static_cast<float>(cfg_.w_adv_global)),
              scale(scalar4(adv_l), static_cast<float>(cfg_.w_adv_local))));
  backward(total);
  opt_g_.step();  // critic grads from the adversarial terms are discarded

  rec.l1_coarse = l1c.item();
  rec.l1_refine = l1r.item();
  rec.adv_g = adv_g.item();
  rec.adv_l = adv_l.item();
  ensure_finite(rec.l1_coarse, "coarse reconstruction loss");
  ensure_finite(rec.l1_refine, "refined reconstruction loss");
  ensure_finite(rec.adv_g, "global adversarial loss");
  ensure_finite(rec.adv_l, "local adversarial loss");
}

StepRecord Trainer::step() {
  StepRecord rec;
  rec.step = step_ + 1;
  for (int64_t i = 0; i < cfg_.critic_steps; ++i) critic_iteration(rec);
  rec.gp_g /= static_cast<double>(cfg_.critic_steps);
  rec.gp_l /= static_cast<double>(cfg_.critic_steps);
  generator_iteration(rec);
  ++step_;
  if (!g_.all_parameters_finite() || !dg_.all_parameters_finite() ||
      !dl_.all_parameters_finite())
    throw Error("training diverged: non-finite parameters at step " +
                std::to_string(step_));
  return rec;
}

void Trainer::run(const std::string& run_dir) {
  fs::create_directories(fs::path(run_dir) / "samples");
  std::string csv_path = (fs::path(run_dir) / "metrics.csv").string();
  bool fresh = step_ == 0 || !fs::exists(csv_path);
  std::ofstream csv(csv_path,
                    fresh ? std::ios::trunc : std::ios::app);
  check(csv.good(), "Trainer: cannot open " + csv_path);
  if (fresh) csv << StepRecord::csv_header() << "\n";

  int64_t last_saved = -1;
  while (step_ < cfg_.total_steps) {
    StepRecord r = step();
    csv << r.csv_row() << "\n";
    csv.flush();
    if (cfg_.ckpt_every > 0 && step_ % cfg_.ckpt_every == 0) {
      save_checkpoint((fs::path(run_dir) /
                       ("ckpt_" + std::to_string(step_) + ".cain"))
                          .string(),
                      to_checkpoint());
      last_saved = step_;
    }
    if (cfg_.sample_every > 0 && step_ % cfg_.sample_every == 0)
      write_samples((fs::path(run_dir) / "samples").string(), step_);
  }
  if (last_saved != step_)
    save_checkpoint(
        (fs::path(run_dir) / ("ckpt_" + std::to_string(step_) + ".cain"))
            .string(),
        to_checkpoint());
}

void Trainer::write_samples(const std::string& dir, int64_t step) {
  NoGradScope<float> guard;
  int64_t k = std::min<int64_t>(4, static_cast<int64_t>(data_.size()));
  int64_t s = cfg_.image_size;
  Image8 grid;
  grid.width = 3 * s;
  grid.height = k * s;
  grid.channels = 3;
  grid.pixels.assign(static_cast<size_t>(grid.size_bytes()), 0);

  Rng mask_rng(cfg_.seed, 11);  // same holes at every cadence for comparison
  for (int64_t i = 0; i < k; ++i) {
    const Tensor<float>& x = data_[static_cast<size_t>(i)];
    MaskPair p = sample_mask_pair(mask_rng, s, s, cfg_.hole_h, cfg_.hole_w);
    Tensor<float> m = mask_tensor<float>(s, s, p.inner);
    Tensor<float> z = corrupt(x, m);
    auto f = g_.forward(z, m);
    Tensor<float> xt = complete(z, f.refined, m);
    Image8 tiles[3] = {tensor_to_image(x), tensor_to_image(z),
                       tensor_to_image(xt)};
    for (int64_t t = 0; t < 3; ++t)
      for (int64_t y = 0; y < s; ++y)
        for (int64_t xx = 0; xx < s; ++xx)
          for (int64_t c = 0; c < 3; ++c)
            grid.at(i * s + y, t * s + xx, c) = tiles[t].at(y, xx, c);
  }
  write_png((fs::path(dir) / ("step_" + std::to_string(step) + ".png"))
                .string(),
            grid);
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint c;
  c.add_scalar_f64("step", static_cast<double>(step_));

  // enough of the configuration to rebuild the generator for inference
  c.add_scalar_f64("cfg.multiplier", cfg_.multiplier);
  c.add_scalar_f64("cfg.image_size", static_cast<double>(cfg_.image_size));
  c.add_scalar_f64("cfg.hole", static_cast<double>(cfg_.hole_h));
  c.add_scalar_f64("cfg.attention", cfg_.attention_enabled ? 1.0 : 0.0);
  c.add_scalar_f64("cfg.attn.patch_size",
                   static_cast<double>(cfg_.attn.patch_size));
  c.add_scalar_f64("cfg.attn.softmax_scale", cfg_.attn.softmax_scale);
  c.add_scalar_f64("cfg.attn.prop_radius",
                   static_cast<double>(cfg_.attn.prop_radius));
  c.add_scalar_f64("cfg.attn.extract_stride",
                   static_cast<double>(cfg_.attn.extract_stride));
  c.add_scalar_f64("cfg.attn.downscale_rate",
                   static_cast<double>(cfg_.attn.downscale_rate));

  Tensor<double> r = Tensor<double>::zeros({1, 1, 1, 4});
  double* pr = r.ptr();
  split_u64(rng_.state(), &pr[0], &pr[1]);
  split_u64(rng_.inc(), &pr[2], &pr[3]);
  c.add("rng", r);

  for (const auto& [name, t] : g_.named_parameters()) c.add("g." + name, t);
  for (const auto& [name, t] : dg_.named_parameters()) c.add("dg." + name, t);
  for (const auto& [name, t] : dl_.named_parameters()) c.add("dl." + name, t);

  const Adam<float>* opts[3] = {&opt_g_, &opt_dg_, &opt_dl_};
  const char* tags[3] = {"opt.g", "opt.dg", "opt.dl"};
  for (int i = 0; i < 3; ++i) {
    c.add_scalar_f64(std::string(tags[i]) + ".t",
                     static_cast<double>(opts[i]->steps_taken()));
    for (const auto& s : opts[i]->slots()) {
      c.add(std::string(tags[i]) + "." + s.name + ".m", s.m);
      c.add(std::string(tags[i]) + "." + s.name + ".v", s.v);
    }
  }
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  step_ = std::llround(c.scalar_f64("step"));

  Tensor<double> r = Tensor<double>::zeros({1, 1, 1, 4});
  c.load_into("rng", r);
  const double* pr = r.ptr();
  rng_.restore(join_u64(pr[0], pr[1]), join_u64(pr[2], pr[3]));

  for (auto& [name, t] : g_.named_parameters()) c.load_into("g." + name, t);
  for (auto& [name, t] : dg_.named_parameters()) c.load_into("dg." + name, t);
  for (auto& [name, t] : dl_.named_parameters()) c.load_into("dl." + name, t);

  Adam<float>* opts[3] = {&opt_g_, &opt_dg_, &opt_dl_};
  const char* tags[3] = {"opt.g", "opt.dg", "opt.dl"};
  for (int i = 0; i < 3; ++i) {
    opts[i]->set_steps_taken(
        std::llround(c.scalar_f64(std::string(tags[i]) + ".t")));
    for (auto& s : opts[i]->slots()) {
      c.load_into(std::string(tags[i]) + "." + s.name + ".m", s.m);
      c.load_into(std::string(tags[i]) + "." + s.name + ".v", s.v);
    }
  }
}

EvalSummary Trainer::evaluate(const std::vector<Tensor<float>>& images,
                              uint64_t mask_seed) {
  check(!images.empty(), "Trainer::evaluate: no images");
  NoGradScope<float> guard;
  Rng erng(mask_seed, 9);
  int64_t s = cfg_.image_size;
  EvalSummary sum;
  for (const Tensor<float>& x : images) {
    check(x.rank() == 4 && x.dim(0) == 1 && x.dim(1) == 3 && x.dim(2) == s &&
              x.dim(3) == s,
          "Trainer::evaluate: image dims " + shape_str(x.dims()));
    MaskPair p = sample_mask_pair(erng, s, s, cfg_.hole_h, cfg_.hole_w);
    Tensor<float> m = mask_tensor<float>(s, s, p.inner);
    Tensor<float> z = corrupt(x, m);
    auto f = g_.forward(z, m);
    Tensor<float> xt = complete(z, f.refined, m);
    EvalMetrics em = eval_metrics(xt, x);
    sum.l1_pct += em.l1_pct;
    sum.l2_pct += em.l2_pct;
    sum.psnr += em.psnr;
    sum.tv += em.tv;
    Tensor<float> w = build_discount_mask<float>(s, s, p.inner, cfg_.gamma);
    sum.discounted += discounted_l1(xt, x, w).item();
  }
  double n = static_cast<double>(images.size());
  sum.l1_pct /= n;
  sum.l2_pct /= n;
  sum.psnr /= n;
  sum.tv /= n;
  sum.discounted /= n;
  return sum;
}

}  // namespace cain
