#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cain/config.h"
#include "cain/textures.h"
#include "cain/trainer.h"
#include "test_util.h"

using namespace cain;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.image_size = 32;
  cfg.hole_h = cfg.hole_w = 16;
  cfg.batch = 1;
  cfg.critic_steps = 2;
  cfg.total_steps = 3;
  cfg.seed = 21;
  cfg.ckpt_every = 0;
  cfg.sample_every = 0;
  return cfg;
}

std::vector<Tensor<float>> tiny_data() { return make_dataset(4, 32, 5); }

double param_delta(GeneratorModel<float>& a, GeneratorModel<float>& b) {
  auto pa = a.named_parameters(), pb = b.named_parameters();
  double d = 0;
  for (size_t i = 0; i < pa.size(); ++i)
    d = std::max(d, max_abs_diff(pa[i].second, pb[i].second));
  return d;
}

}  // namespace

TEST_CASE("configuration validation") {
  TrainConfig cfg = tiny_config();
  cfg.validate();
  cfg.hole_w = 12;  // non-square local crop
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = tiny_config();
  cfg.hole_h = cfg.hole_w = 40;  // larger than the image
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = tiny_config();
  cfg.beta2 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_THROWS_AS(Trainer(tiny_config(), {}), Error);
}

TEST_CASE("metric rows are csv formatted") {
  CHECK(StepRecord::csv_header() ==
        "step,l1_coarse,l1_refine,adv_g,adv_l,gp_g,gp_l");
  StepRecord r;
  r.step = 7;
  r.l1_coarse = 0.5;
  r.gp_l = 1.25;
  CHECK(r.csv_row() == "7,0.5,0,0,0,0,1.25");
}

TEST_CASE("both networks move and the loop is deterministic") {
  Trainer t1(tiny_config(), tiny_data());
  Trainer t2(tiny_config(), tiny_data());
  std::vector<float> snapshot;
  for (const auto& [name, p] : t1.generator().named_parameters())
    snapshot.insert(snapshot.end(), p.data().begin(), p.data().end());
  std::vector<float> critic_snapshot;
  for (const auto& [name, p] : t1.global_critic().named_parameters())
    critic_snapshot.insert(critic_snapshot.end(), p.data().begin(),
                           p.data().end());

  for (int k = 0; k < 3; ++k) {
    StepRecord r1 = t1.step();
    StepRecord r2 = t2.step();
    CHECK(r1.csv_row() == r2.csv_row());  // bitwise-equal trajectories
    CHECK(r1.step == k + 1);
  }

  size_t at = 0;
  double dg = 0;
  for (const auto& [name, p] : t1.generator().named_parameters())
    for (float v : p.data())
      dg = std::max(dg, std::abs(static_cast<double>(v) - snapshot[at++]));
  CHECK(dg > 0);  // the generator actually trained

  at = 0;
  double dc = 0;
  for (const auto& [name, p] : t1.global_critic().named_parameters())
    for (float v : p.data())
      dc = std::max(
          dc, std::abs(static_cast<double>(v) - critic_snapshot[at++]));
  CHECK(dc > 0);  // so did the critic

  CHECK(param_delta(t1.generator(), t2.generator()) == 0.0);
}

TEST_CASE("checkpoint resume reproduces the run bitwise") {
  Trainer a(tiny_config(), tiny_data());
  for (int k = 0; k < 2; ++k) a.step();
  Checkpoint mid = a.to_checkpoint();

  std::vector<std::string> tail;
  for (int k = 0; k < 3; ++k) tail.push_back(a.step().csv_row());

  Trainer b(tiny_config(), tiny_data());
  b.restore(mid);
  CHECK(b.current_step() == 2);
  for (int k = 0; k < 3; ++k) CHECK(b.step().csv_row() == tail[k]);
  CHECK(param_delta(a.generator(), b.generator()) == 0.0);

  // save -> load -> save is byte-identical
  Checkpoint end = a.to_checkpoint();
  std::vector<uint8_t> bytes = encode_checkpoint(end);
  Trainer c(tiny_config(), tiny_data());
  c.restore(decode_checkpoint(bytes));
  CHECK(encode_checkpoint(c.to_checkpoint()) == bytes);
}

TEST_CASE("run writes the expected directory layout") {
  namespace fs = std::filesystem;
  TrainConfig cfg = tiny_config();
  cfg.total_steps = 2;
  cfg.ckpt_every = 1;
  cfg.sample_every = 2;
  std::string dir =
      (fs::temp_directory_path() / "trainer_run_layout").string();
  fs::remove_all(dir);
  Trainer t(cfg, tiny_data());
  t.run(dir);

  CHECK(fs::exists(fs::path(dir) / "metrics.csv"));
  CHECK(fs::exists(fs::path(dir) / "ckpt_1.cain"));
  CHECK(fs::exists(fs::path(dir) / "ckpt_2.cain"));
  CHECK(fs::exists(fs::path(dir) / "samples" / "step_2.png"));

  std::ifstream csv((fs::path(dir) / "metrics.csv").string());
  std::string line;
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);  // header + one row per generator step
  fs::remove_all(dir);
}

TEST_CASE("evaluation is seeded and repeatable") {
  Trainer t(tiny_config(), tiny_data());
  std::vector<Tensor<float>> held = make_dataset(3, 32, 99);
  EvalSummary a = t.evaluate(held, 4);
  EvalSummary b = t.evaluate(held, 4);
  EvalSummary c = t.evaluate(held, 5);
  CHECK(a.discounted == b.discounted);
  CHECK(a.l1_pct == b.l1_pct);
  CHECK(a.discounted > 0);
  CHECK((a.discounted != c.discounted || a.l1_pct != c.l1_pct));
}

TEST_CASE("an absurd step size trips the divergence guard") {
  TrainConfig cfg = tiny_config();
  cfg.lr = 1e18;
  cfg.total_steps = 6;
  Trainer t(cfg, tiny_data());
  CHECK_THROWS_WITH_AS(
      [&] {
        for (int k = 0; k < 6; ++k) t.step();
      }(),
      doctest::Contains("diverged"), Error);
}
