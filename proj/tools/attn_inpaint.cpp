// Command-line surface: dataset synthesis, training, inference, attention
// visualization, metric evaluation, and the self-check oracle suite.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cain/config.h"
#include "cain/image.h"
#include "cain/losses.h"
#include "cain/masking.h"
#include "cain/oracle.h"
#include "cain/textures.h"
#include "cain/trainer.h"

namespace fs = std::filesystem;
using namespace cain;

namespace {

Tensor<float> load_image_tensor(const std::string& path) {
  Image8 img = read_png(path);
  if (img.channels == 1) {  // promote grayscale photos to rgb
    Image8 rgb;
    rgb.width = img.width;
    rgb.height = img.height;
    rgb.channels = 3;
    rgb.pixels.resize(static_cast<size_t>(rgb.size_bytes()));
    for (int64_t y = 0; y < img.height; ++y)
      for (int64_t x = 0; x < img.width; ++x)
        for (int64_t c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
    img = std::move(rgb);
  }
  return image_to_tensor(img);
}

Tensor<float> load_mask_tensor(const std::string& path) {
  Image8 img = read_png(path);
  if (img.channels == 3) {  // accept rgb masks via their first channel
    Image8 gray;
    gray.width = img.width;
    gray.height = img.height;
    gray.channels = 1;
    gray.pixels.resize(static_cast<size_t>(gray.size_bytes()));
    for (int64_t y = 0; y < img.height; ++y)
      for (int64_t x = 0; x < img.width; ++x) gray.at(y, x, 0) = img.at(y, x, 0);
    img = std::move(gray);
  }
  return mask_image_to_tensor(img);
}

// Pads a (1,c,h,w) tensor to (1,c,size,size) by replicating the last row and
// column (images) or with a constant (masks: 1 = known, so the padding never
// looks like hole).
Tensor<float> pad_to_square(const Tensor<float>& t, int64_t size,
                            bool replicate) {
  int64_t c = t.dim(1), h = t.dim(2), w = t.dim(3);
  if (h == size && w == size) return t;
  Tensor<float> out = Tensor<float>::zeros({1, c, size, size});
  const float* ps = t.ptr();
  float* pd = out.ptr();
  for (int64_t ic = 0; ic < c; ++ic)
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        int64_t sy = std::min(y, h - 1), sx = std::min(x, w - 1);
        float v = replicate || (y < h && x < w)
                      ? ps[(ic * h + sy) * w + sx]
                      : 1.0f;
        pd[(ic * size + y) * size + x] = v;
      }
  return out;
}

struct InferenceModel {
  ArchSpec arch;
  GeneratorModel<float> g;
  int64_t hole = 0;

  InferenceModel(const ArchSpec& a, uint64_t seed, int64_t hole_dim)
      : arch(a), g(a, seed), hole(hole_dim) {}
};

// Rebuilds the generator described by a training checkpoint at an arbitrary
// square working size (the net is fully convolutional, so the weights are
// size-independent).
InferenceModel load_generator(const Checkpoint& ckpt, int64_t image_size) {
  double mult = ckpt.scalar_f64("cfg.multiplier");
  int64_t hole = std::llround(ckpt.scalar_f64("cfg.hole"));
  int64_t local = std::clamp<int64_t>(hole, 8, image_size);
  ArchSpec arch = default_arch(mult, image_size, local);
  arch.attention_enabled = ckpt.scalar_f64("cfg.attention") != 0.0;
  arch.attn.patch_size = std::llround(ckpt.scalar_f64("cfg.attn.patch_size"));
  arch.attn.softmax_scale = ckpt.scalar_f64("cfg.attn.softmax_scale");
  arch.attn.prop_radius = std::llround(ckpt.scalar_f64("cfg.attn.prop_radius"));
  arch.attn.extract_stride =
      std::llround(ckpt.scalar_f64("cfg.attn.extract_stride"));
  arch.attn.downscale_rate =
      std::llround(ckpt.scalar_f64("cfg.attn.downscale_rate"));
  arch.validate();

  InferenceModel m(arch, 0, hole);
  for (auto& [name, t] : m.g.named_parameters())
    ckpt.load_into("g." + name, t);
  return m;
}

// Smallest square working size that the encoder strides and the attention
// downscale divide evenly.
int64_t working_size(int64_t h, int64_t w, const ArchSpec& arch) {
  int64_t unit = arch.attention_enabled && arch.attn.downscale_rate == 2 ? 8 : 4;
  int64_t side = std::max(h, w);
  return (side + unit - 1) / unit * unit;
}

int64_t arch_unit(const Checkpoint& ckpt) {
  bool attn = ckpt.scalar_f64("cfg.attention") != 0.0;
  int64_t rate = std::llround(ckpt.scalar_f64("cfg.attn.downscale_rate"));
  return attn && rate == 2 ? 8 : 4;
}

Image8 unit_tensor_to_image(const Tensor<float>& t) {  // values in [0,1]
  Image8 img;
  img.width = t.dim(3);
  img.height = t.dim(2);
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(img.size_bytes()));
  const float* p = t.ptr();
  int64_t plane = img.height * img.width;
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        float v = p[c * plane + y * img.width + x];
        long b = std::lroundf(v * 255.0f);
        img.at(y, x, c) = static_cast<uint8_t>(std::clamp(b, 0L, 255L));
      }
  return img;
}

std::vector<std::string> list_pngs(const std::string& dir) {
  std::vector<std::string> files;
  check(fs::is_directory(dir), "'" + dir + "' is not a directory");
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

int cmd_gendata(const std::string& out_dir, int64_t count, int64_t size,
                uint64_t seed) {
  check(count > 0, "gendata: count must be positive");
  check(size >= 32, "gendata: size must be at least 32");
  fs::create_directories(out_dir);
  std::vector<Tensor<float>> data = make_dataset(count, size, seed);
  for (int64_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "tex_%04d.png", static_cast<int>(i));
    write_png((fs::path(out_dir) / name).string(),
              tensor_to_image(data[static_cast<size_t>(i)]));
  }
  std::cout << "wrote " << count << " textures of size " << size << " to "
            << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& sets,
              const std::string& data_dir, const std::string& resume) {
  TrainConfig cfg =
      config_path.empty() ? TrainConfig{} : load_config_file(config_path);
  for (const std::string& s : sets) apply_override(cfg, s);
  cfg.validate();

  std::vector<Tensor<float>> dataset;
  if (!data_dir.empty()) {
    for (const std::string& f : list_pngs(data_dir)) {
      Tensor<float> t = load_image_tensor(f);
      check(t.dim(2) == cfg.image_size && t.dim(3) == cfg.image_size,
            "train: '" + f + "' is " + shape_str(t.dims()) +
                " but train.image_size = " + std::to_string(cfg.image_size));
      dataset.push_back(t);
    }
    check(!dataset.empty(), "train: no PNG files in '" + data_dir + "'");
  } else {
    dataset = make_dataset(16, cfg.image_size, cfg.seed);
  }

  fs::create_directories(out_dir);
  {
    std::ofstream echo((fs::path(out_dir) / "config.echo").string());
    check(echo.good(), "train: cannot write config.echo");
    echo << echo_config(cfg);
  }

  Trainer trainer(cfg, std::move(dataset));
  if (!resume.empty()) trainer.restore(load_checkpoint(resume));
  trainer.run(out_dir);
  std::cout << "trained to step " << trainer.current_step() << "; run files in "
            << out_dir << "\n";
  return 0;
}

int cmd_complete(const std::string& ckpt_path, const std::string& image_path,
                 const std::string& mask_path, const std::string& out_path) {
  Image8 src = read_png(image_path);
  Tensor<float> x = load_image_tensor(image_path);
  Tensor<float> m = load_mask_tensor(mask_path);
  check(x.dim(2) == m.dim(2) && x.dim(3) == m.dim(3),
        "complete: image is " + shape_str(x.dims()) + " but mask is " +
            shape_str(m.dims()));
  int64_t h = x.dim(2), w = x.dim(3);

  Checkpoint ckpt = load_checkpoint(ckpt_path);
  int64_t unit = arch_unit(ckpt);
  int64_t side = (std::max(h, w) + unit - 1) / unit * unit;
  InferenceModel model = load_generator(ckpt, side);

  Tensor<float> xp = pad_to_square(x, side, /*replicate=*/true);
  Tensor<float> mp = pad_to_square(m, side, /*replicate=*/false);
  NoGradScope<float> guard;
  Tensor<float> z = corrupt(xp, mp);
  auto f = model.g.forward(z, mp);
  Tensor<float> xt = crop_spatial(complete(z, f.refined, mp), 0, 0, h, w);

  Image8 out = tensor_to_image(xt);
  Image8 mask_img = read_png(mask_path);
  for (int64_t y = 0; y < h; ++y)  // known pixels byte-identical to the input
    for (int64_t xx = 0; xx < w; ++xx)
      if (mask_img.at(y, xx, 0) >= 128)
        for (int64_t c = 0; c < 3; ++c)
          out.at(y, xx, c) = src.channels == 3 ? src.at(y, xx, c)
                                               : src.at(y, xx, 0);
  write_png(out_path, out);
  std::cout << "completed " << image_path << " -> " << out_path << "\n";
  return 0;
}

int cmd_attend(const std::string& ckpt_path, const std::string& image_path,
               const std::string& mask_path, const std::string& out_path,
               bool legend) {
  Tensor<float> x = load_image_tensor(image_path);
  Tensor<float> m = load_mask_tensor(mask_path);
  check(x.dim(2) == m.dim(2) && x.dim(3) == m.dim(3),
        "attend: image is " + shape_str(x.dims()) + " but mask is " +
            shape_str(m.dims()));
  int64_t h = x.dim(2), w = x.dim(3);

  Checkpoint ckpt = load_checkpoint(ckpt_path);
  check(ckpt.scalar_f64("cfg.attention") != 0.0,
        "attend: this checkpoint was trained without the attention branch");
  int64_t unit = arch_unit(ckpt);
  int64_t side = (std::max(h, w) + unit - 1) / unit * unit;
  InferenceModel model = load_generator(ckpt, side);

  Tensor<float> xp = pad_to_square(x, side, /*replicate=*/true);
  Tensor<float> mp = pad_to_square(m, side, /*replicate=*/false);
  NoGradScope<float> guard;
  Tensor<float> z = corrupt(xp, mp);
  auto f = model.g.forward(z, mp);
  check(!f.scores.empty(), "attend: forward produced no attention scores");

  Tensor<float> color = attention_to_color(f.scores[0]);
  int64_t qh = color.dim(2);
  check(side % qh == 0, "attend: map size does not divide the working size");
  Tensor<float> up =
      crop_spatial(nearest_up(color, side / qh), 0, 0, h, w);
  Image8 out = unit_tensor_to_image(up);

  if (legend) {  // direction -> hue strip, appended below the map
    int64_t strip = 16;
    Image8 with;
    with.width = w;
    with.height = h + strip;
    with.channels = 3;
    with.pixels.assign(static_cast<size_t>(with.size_bytes()), 0);
    for (int64_t y = 0; y < h; ++y)
      for (int64_t xx = 0; xx < w; ++xx)
        for (int64_t c = 0; c < 3; ++c)
          with.at(y, xx, c) = out.at(y, xx, c);
    for (int64_t xx = 0; xx < w; ++xx) {
      double hue = w > 1 ? static_cast<double>(xx) / (w - 1) : 0.0;
      double hh = hue * 6.0;
      int sector = static_cast<int>(hh) % 6;
      double fr = hh - std::floor(hh);
      double r, g, b;
      switch (sector) {
        case 0: r = 1; g = fr; b = 0; break;
        case 1: r = 1 - fr; g = 1; b = 0; break;
        case 2: r = 0; g = 1; b = fr; break;
        case 3: r = 0; g = 1 - fr; b = 1; break;
        case 4: r = fr; g = 0; b = 1; break;
        default: r = 1; g = 0; b = 1 - fr; break;
      }
      for (int64_t y = h; y < h + strip; ++y) {
        with.at(y, xx, 0) = static_cast<uint8_t>(std::lround(r * 255));
        with.at(y, xx, 1) = static_cast<uint8_t>(std::lround(g * 255));
        with.at(y, xx, 2) = static_cast<uint8_t>(std::lround(b * 255));
      }
    }
    out = std::move(with);
  }
  write_png(out_path, out);
  std::cout << "attention map for " << image_path << " -> " << out_path
            << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dir,
             uint64_t seed, bool identity) {
  std::vector<std::string> files = list_pngs(dir);
  check(!files.empty(), "eval: no PNG files in '" + dir + "'");
  std::vector<Tensor<float>> images;
  for (const std::string& f : files) {
    Tensor<float> t = load_image_tensor(f);
    if (!images.empty())
      check(t.dims() == images.front().dims(),
            "eval: '" + f + "' is " + shape_str(t.dims()) +
                " but earlier images are " + shape_str(images.front().dims()));
    images.push_back(t);
  }
  int64_t h = images[0].dim(2), w = images[0].dim(3);

  int64_t hole = std::max<int64_t>(8, std::min(h, w) / 2);
  std::optional<Checkpoint> ckpt;
  std::optional<InferenceModel> model;
  int64_t side = std::max(h, w);
  if (!identity) {
    check(!ckpt_path.empty(), "eval: --ckpt is required without --identity");
    ckpt.emplace(load_checkpoint(ckpt_path));
    int64_t unit = arch_unit(*ckpt);
    side = (side + unit - 1) / unit * unit;
    model.emplace(load_generator(*ckpt, side));
    hole = std::clamp<int64_t>(model->hole, 8, std::min(h, w));
  }

  NoGradScope<float> guard;
  Rng rng(seed, 9);
  double l1 = 0, l2 = 0, psnr = 0, tv = 0;
  for (const Tensor<float>& x : images) {
    MaskPair p = sample_mask_pair(rng, h, w, hole, hole);
    Tensor<float> xt;
    if (identity) {
      xt = x;
    } else {
      Tensor<float> m = mask_tensor<float>(h, w, p.inner);
      Tensor<float> xp = pad_to_square(x, side, /*replicate=*/true);
      Tensor<float> mp = pad_to_square(m, side, /*replicate=*/false);
      Tensor<float> z = corrupt(xp, mp);
      auto f = model->g.forward(z, mp);
      xt = crop_spatial(complete(z, f.refined, mp), 0, 0, h, w);
    }
    EvalMetrics em = eval_metrics(xt, x);
    l1 += em.l1_pct;
    l2 += em.l2_pct;
    psnr += em.psnr;
    tv += em.tv;
  }
  double n = static_cast<double>(images.size());
  char row[200];
  std::snprintf(row, sizeof row, "%.6g,%.6g,%.6g,%.6g", l1 / n, l2 / n,
                psnr / n, tv / n);
  std::cout << "l1_pct,l2_pct,psnr,tv\n" << row << "\n";
  return 0;
}

int cmd_check(double perturb) {
  std::vector<OracleReport> reports = run_oracle_suite(perturb);
  int64_t failed = 0;
  for (const OracleReport& r : reports) {
    std::cout << r.line() << "\n";
    if (!r.pass) ++failed;
  }
  std::cout << reports.size() << " cases, " << failed << " failed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"image inpainting with a contextual attention refinement stage"};
  app.require_subcommand(1);

  auto* gendata =
      app.add_subcommand("gendata", "write a synthetic texture dataset");
  std::string gd_out = "data";
  int64_t gd_count = 16, gd_size = 64;
  uint64_t gd_seed = 1;
  gendata->add_option("--out", gd_out, "output directory");
  gendata->add_option("--count", gd_count, "number of images");
  gendata->add_option("--size", gd_size, "image side length (>= 32)");
  gendata->add_option("--seed", gd_seed, "generation seed");

  auto* train = app.add_subcommand("train", "run the training loop");
  std::string tr_config, tr_out = "run", tr_data, tr_resume;
  std::vector<std::string> tr_sets;
  train->add_option("--config", tr_config, "configuration file");
  train->add_option("--out", tr_out, "run directory");
  train->add_option("--data", tr_data,
                    "PNG directory (default: 16 built-in textures)");
  train->add_option("--resume", tr_resume, "checkpoint to continue from");
  train->add_option("--set", tr_sets,
                    "override, e.g. --set train.total_steps=10");

  auto* complete_cmd =
      app.add_subcommand("complete", "fill the masked region of an image");
  std::string cp_ckpt, cp_image, cp_mask, cp_out = "completed.png";
  complete_cmd->add_option("--ckpt", cp_ckpt, "checkpoint")->required();
  complete_cmd->add_option("--image", cp_image, "input PNG")->required();
  complete_cmd->add_option("--mask", cp_mask, "mask PNG (255 known, 0 hole)")
      ->required();
  complete_cmd->add_option("--out", cp_out, "output PNG");

  auto* attend =
      app.add_subcommand("attend", "export the attention map as a color wheel");
  std::string at_ckpt, at_image, at_mask, at_out = "attention.png";
  bool at_legend = false;
  attend->add_option("--ckpt", at_ckpt, "checkpoint")->required();
  attend->add_option("--image", at_image, "input PNG")->required();
  attend->add_option("--mask", at_mask, "mask PNG")->required();
  attend->add_option("--out", at_out, "output PNG");
  attend->add_flag("--legend", at_legend, "append a hue wheel strip");

  auto* eval_cmd =
      app.add_subcommand("eval", "mean metrics over a directory of images");
  std::string ev_ckpt, ev_dir;
  uint64_t ev_seed = 1;
  bool ev_identity = false;
  eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint");
  eval_cmd->add_option("--dir", ev_dir, "image directory")->required();
  eval_cmd->add_option("--seed", ev_seed, "mask seed");
  eval_cmd->add_flag("--identity", ev_identity,
                     "score the images against themselves");

  auto* check_cmd =
      app.add_subcommand("check", "run the brute-force reference suite");
  double ck_perturb = 0.0;
  check_cmd->add_option("--perturb", ck_perturb,
                        "inject this relative error (sensitivity hook)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gendata) return cmd_gendata(gd_out, gd_count, gd_size, gd_seed);
    if (*train) return cmd_train(tr_config, tr_out, tr_sets, tr_data, tr_resume);
    if (*complete_cmd) return cmd_complete(cp_ckpt, cp_image, cp_mask, cp_out);
    if (*attend) return cmd_attend(at_ckpt, at_image, at_mask, at_out, at_legend);
    if (*eval_cmd) return cmd_eval(ev_ckpt, ev_dir, ev_seed, ev_identity);
    if (*check_cmd) return cmd_check(ck_perturb);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
