#pragma once

#include <string>
#include <vector>

#include "cain/adam.h"
#include "cain/arch.h"
#include "cain/checkpoint.h"
#include "cain/model.h"

namespace cain {

struct TrainConfig {
  int64_t image_size = 64;
  int64_t hole_h = 32, hole_w = 32;  // outer-box (max hole) dims
  int64_t batch = 4;
  int64_t critic_steps = 5;  // critic updates per generator update
  int64_t total_steps = 200;
  double lr = 1e-4, beta1 = 0.5, beta2 = 0.9;
  double w_coarse_l1 = 1.0, w_refine_l1 = 1.0;
  double w_adv_global = 1e-3, w_adv_local = 1e-3;
  double gamma = 0.99;
  double lambda_gp = 10.0;
  uint64_t seed = 1;
  int64_t ckpt_every = 100;
  int64_t sample_every = 100;
  double multiplier = 0.25;
  bool attention_enabled = true;
  AttentionConfig attn;

  void validate() const;
};

// One row of the metrics log. gp values are means over the critic
// iterations of the cycle.
struct StepRecord {
  int64_t step = 0;
  double l1_coarse = 0, l1_refine = 0;
  double adv_g = 0, adv_l = 0;
  double gp_g = 0, gp_l = 0;

  static std::string csv_header();
  std::string csv_row() const;
};

struct EvalSummary {
  double l1_pct = 0, l2_pct = 0, psnr = 0, tv = 0;
  double discounted = 0;  // mean hole-weighted reconstruction error
};

// Interleaved critic/generator training: each cycle runs `critic_steps`
// critic updates (generator frozen) then one generator update, all drawn
// from a single seeded stream for exact reproducibility.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::vector<Tensor<float>> dataset);

  StepRecord step();  // one full cycle; advances the step counter
  int64_t current_step() const { return step_; }

  // Runs to the configured step budget, writing metrics.csv, periodic
  // checkpoints, and sample grids under run_dir. Divergence throws after
  // the last on-cadence checkpoint is already on disk.
  void run(const std::string& run_dir);

  Checkpoint to_checkpoint() const;
  void restore(const Checkpoint& c);

  GeneratorModel<float>& generator() { return g_; }
  CriticModel<float>& global_critic() { return dg_; }
  CriticModel<float>& local_critic() { return dl_; }

  // Held-out scoring with masks drawn from mask_seed, model untouched.
  EvalSummary evaluate(const std::vector<Tensor<float>>& images,
                       uint64_t mask_seed);

 private:
  struct Batch {
    Tensor<float> x, m;
    std::vector<MaskPair> pairs;
  };
  Batch sample_batch();
  Tensor<float> crop_stack(const Tensor<float>& t,
                           const std::vector<MaskPair>& pairs) const;
  void critic_iteration(StepRecord& rec);
  void generator_iteration(StepRecord& rec);
  void write_samples(const std::string& dir, int64_t step);
  void ensure_finite(double v, const char* what) const;

  TrainConfig cfg_;
  std::vector<Tensor<float>> data_;
  GeneratorModel<float> g_;
  CriticModel<float> dg_, dl_;
  Adam<float> opt_g_, opt_dg_, opt_dl_;
  Rng rng_;
  int64_t step_ = 0;
};

}  // namespace cain
