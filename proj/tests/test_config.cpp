#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cain/config.h"
#include "test_util.h"

using namespace cain;

TEST_CASE("empty text yields the defaults") {
  TrainConfig c = parse_config_text("");
  TrainConfig d;
  CHECK(c.image_size == d.image_size);
  CHECK(c.hole_h == d.hole_h);
  CHECK(c.batch == d.batch);
  CHECK(c.critic_steps == 5);
  CHECK(c.lr == 1e-4);
  CHECK(c.beta1 == 0.5);
  CHECK(c.beta2 == 0.9);
  CHECK(c.gamma == 0.99);
  CHECK(c.lambda_gp == 10.0);
  CHECK(c.w_adv_global == 1e-3);
  CHECK(c.attention_enabled);
  CHECK(c.multiplier == 0.25);
}

TEST_CASE("sections, comments, and values parse") {
  TrainConfig c = parse_config_text(
      "# a comment\n"
      "[train]\n"
      "image_size = 96   ; trailing comment\n"
      "hole = 24\n"
      "lr = 2e-4\n"
      "seed = 77\n"
      "\n"
      "[arch]\n"
      "multiplier = 0.5\n"
      "attention = false\n"
      "[attention]\n"
      "downscale_rate = 2\n"
      "softmax_scale = 5\n");
  CHECK(c.image_size == 96);
  CHECK(c.hole_h == 24);
  CHECK(c.hole_w == 24);  // hole sets both dims
  CHECK(c.lr == 2e-4);
  CHECK(c.seed == 77);
  CHECK(c.multiplier == 0.5);
  CHECK(!c.attention_enabled);
  CHECK(c.attn.downscale_rate == 2);
  CHECK(c.attn.softmax_scale == 5.0);
  CHECK(c.batch == 4);  // untouched keys keep their defaults
}

TEST_CASE("bad input is rejected with line context") {
  CHECK_THROWS_WITH_AS(parse_config_text("[train]\nnope = 1\n"),
                       doctest::Contains("unknown key"), Error);
  CHECK_THROWS_WITH_AS(parse_config_text("[serving]\n"),
                       doctest::Contains("unknown section"), Error);
  CHECK_THROWS_AS(parse_config_text("lr = 1e-4\n"), Error);  // before section
  CHECK_THROWS_AS(parse_config_text("[train]\nlr\n"), Error);
  CHECK_THROWS_AS(parse_config_text("[train\nlr = 1\n"), Error);
  CHECK_THROWS_WITH_AS(parse_config_text("[train]\nbatch = four\n"),
                       doctest::Contains("integer"), Error);
  CHECK_THROWS_WITH_AS(parse_config_text("[train]\nlr = fast\n"),
                       doctest::Contains("number"), Error);
  CHECK_THROWS_WITH_AS(parse_config_text("[arch]\nattention = maybe\n"),
                       doctest::Contains("boolean"), Error);
  CHECK_THROWS_AS(load_config_file("/no/such/config.ini"), Error);
}

TEST_CASE("overrides after the file wins") {
  TrainConfig c = parse_config_text("[train]\nbatch = 8\n");
  apply_override(c, "train.batch=2");
  apply_override(c, "arch.multiplier = 1.0");
  CHECK(c.batch == 2);
  CHECK(c.multiplier == 1.0);

  CHECK_THROWS_AS(apply_override(c, "train.batch"), Error);
  CHECK_THROWS_AS(apply_override(c, "batch=2"), Error);
  CHECK_THROWS_AS(apply_override(c, "train.nope=2"), Error);
}

TEST_CASE("echo is canonical and reparses to the same config") {
  TrainConfig c = parse_config_text(
      "[train]\nlr = 0.00025\ntotal_steps = 321\n[arch]\nmultiplier = 0.75\n");
  std::string echo = echo_config(c);
  CHECK(echo.find("[train]") != std::string::npos);
  CHECK(echo.find("[arch]") != std::string::npos);
  CHECK(echo.find("[attention]") != std::string::npos);
  CHECK(echo.find("total_steps = 321") != std::string::npos);

  TrainConfig back = parse_config_text(echo);
  CHECK(back.lr == c.lr);
  CHECK(back.total_steps == c.total_steps);
  CHECK(back.multiplier == c.multiplier);
  CHECK(echo_config(back) == echo);  // fixed point
}
