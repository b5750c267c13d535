#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cain/checkpoint.h"
#include "test_util.h"

using namespace cain;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  Rng rng(17);
  c.add("alpha.w", randt(rng, {2, 3, 3, 3}));
  Tensor<double> d = Tensor<double>::zeros({1, 1, 1, 4});
  for (int64_t i = 0; i < 4; ++i) d.ptr()[i] = 1e300 * (i + 1);
  c.add("beta", d);
  c.add_scalar_f64("step", 12345.0);
  return c;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("encode and decode preserve everything") {
  Checkpoint c = sample_checkpoint();
  std::vector<uint8_t> bytes = encode_checkpoint(c);
  Checkpoint d = decode_checkpoint(bytes);

  CHECK(d.entries.size() == 3);
  Tensor<float> w = Tensor<float>::zeros({2, 3, 3, 3});
  d.load_into("alpha.w", w);
  Tensor<float> w0 = Tensor<float>::zeros({2, 3, 3, 3});
  c.load_into("alpha.w", w0);
  CHECK(max_abs_diff(w, w0) == 0.0);

  Tensor<double> b = Tensor<double>::zeros({1, 1, 1, 4});
  d.load_into("beta", b);
  CHECK(b.data()[3] == 4e300);  // f64 payloads survive bit-exactly
  CHECK(d.scalar_f64("step") == 12345.0);

  // a second encode of the decoded object is byte-identical
  CHECK(encode_checkpoint(d) == bytes);
}

TEST_CASE("file save and load round-trip byte-identically") {
  Checkpoint c = sample_checkpoint();
  std::string p1 = temp_path("ckpt_rt_1.cain");
  std::string p2 = temp_path("ckpt_rt_2.cain");
  save_checkpoint(p1, c);
  Checkpoint d = load_checkpoint(p1);
  save_checkpoint(p2, d);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(!b1.empty());
  CHECK(b1 == b2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("lookup failures and type mismatches throw") {
  Checkpoint c = sample_checkpoint();
  CHECK(c.contains("alpha.w"));
  CHECK(!c.contains("gamma"));
  CHECK_THROWS_AS(c.find("gamma"), Error);

  Tensor<float> wrong_dims = Tensor<float>::zeros({1, 1, 1, 1});
  CHECK_THROWS_AS(c.load_into("alpha.w", wrong_dims), Error);

  Tensor<double> wrong_type = Tensor<double>::zeros({2, 3, 3, 3});
  CHECK_THROWS_AS(c.load_into("alpha.w", wrong_type), Error);

  CHECK_THROWS_AS(c.scalar_f64("alpha.w"), Error);  // not an f64 scalar
}

TEST_CASE("corruption is detected") {
  std::vector<uint8_t> bytes = encode_checkpoint(sample_checkpoint());

  SUBCASE("bad magic") {
    std::vector<uint8_t> b = bytes;
    b[0] ^= 0xff;
    CHECK_THROWS_WITH_AS(decode_checkpoint(b),
                         doctest::Contains("magic"), Error);
  }
  SUBCASE("flipped payload byte") {
    std::vector<uint8_t> b = bytes;
    b[b.size() / 2] ^= 0x01;
    CHECK_THROWS_WITH_AS(decode_checkpoint(b),
                         doctest::Contains("checksum"), Error);
  }
  SUBCASE("truncation") {
    std::vector<uint8_t> b(bytes.begin(), bytes.end() - 9);
    CHECK_THROWS_AS(decode_checkpoint(b), Error);
  }
  SUBCASE("unsupported version") {
    std::vector<uint8_t> b = bytes;
    b[4] = 9;  // version field, then re-seal the checksum
    uLong crc = crc32(0L, b.data(), static_cast<uInt>(b.size() - 4));
    for (int i = 0; i < 4; ++i)
      b[b.size() - 4 + i] = static_cast<uint8_t>((crc >> (8 * i)) & 0xff);
    CHECK_THROWS_WITH_AS(decode_checkpoint(b),
                         doctest::Contains("version"), Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(temp_path("no_such_file.cain")), Error);
  }
}

TEST_CASE("duplicate names are rejected") {
  Checkpoint c;
  c.add_scalar_f64("x", 1.0);
  CHECK_THROWS_AS(c.add_scalar_f64("x", 2.0), Error);
}
