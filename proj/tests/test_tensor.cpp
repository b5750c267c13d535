#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cain/tensor.h"

using namespace cain;

TEST_CASE("factories and element access") {
  TensorF z = TensorF::zeros({2, 3, 4, 5});
  CHECK_EQ(z.numel(), 120);
  CHECK_EQ(z.rank(), 4u);
  CHECK_EQ(z.dim(2), 4);
  for (float v : z.data()) CHECK_EQ(v, 0.0f);

  TensorF f = TensorF::full({1, 1, 2, 2}, 3.0f);
  CHECK_EQ(f.at(0, 0, 1, 1), 3.0f);
  f.at(0, 0, 0, 1) = 7.0f;
  CHECK_EQ(f.ptr()[1], 7.0f);

  TensorF s = TensorF::scalar(2.5f);
  CHECK_EQ(s.dims(), Shape{1, 1, 1, 1});
  CHECK_EQ(s.item(), 2.5f);
}

TEST_CASE("from validates the element count") {
  CHECK_NOTHROW(TensorF::from({1, 1, 1, 3}, {1.f, 2.f, 3.f}));
  CHECK_THROWS_AS(TensorF::from({1, 1, 1, 3}, {1.f, 2.f}), Error);
}

TEST_CASE("shapes must be positive") {
  CHECK_THROWS_AS(TensorF::zeros({1, 0, 2, 2}), Error);
  CHECK_THROWS_AS(TensorF::zeros({-1, 1, 1, 1}), Error);
}

TEST_CASE("copies share storage, detach does not") {
  TensorF a = TensorF::from({1, 1, 1, 2}, {1.f, 2.f});
  TensorF b = a;
  CHECK(a.same_storage(b));
  b.ptr()[0] = 9.f;
  CHECK_EQ(a.ptr()[0], 9.f);

  TensorF c = a.detach();
  CHECK_FALSE(a.same_storage(c));
  a.ptr()[1] = -1.f;
  CHECK_EQ(c.ptr()[1], 2.f);
}

TEST_CASE("item requires a single element") {
  CHECK_THROWS_AS(TensorF::zeros({1, 1, 1, 2}).item(), Error);
}

TEST_CASE("gradient slots") {
  TensorF t = TensorF::zeros({1, 1, 1, 3});
  CHECK_FALSE(t.requires_grad());
  CHECK_FALSE(t.has_grad());
  t.set_requires_grad(true);
  CHECK(t.requires_grad());

  // grad() of an untouched leaf is zeros
  TensorF g0 = t.grad();
  for (float v : g0.data()) CHECK_EQ(v, 0.0f);

  std::vector<float> c{1.f, 2.f, 3.f};
  t.accumulate_grad(c);
  t.accumulate_grad(c);
  CHECK_EQ(t.grad_data()[1], 4.0f);
  t.zero_grad();
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("random factories are deterministic under seed") {
  Rng r1(5), r2(5);
  TensorF a = TensorF::uniform({1, 2, 3, 3}, r1, -1.f, 1.f);
  TensorF b = TensorF::uniform({1, 2, 3, 3}, r2, -1.f, 1.f);
  for (int64_t i = 0; i < a.numel(); ++i) {
    CHECK_EQ(a.ptr()[i], b.ptr()[i]);
    REQUIRE(a.ptr()[i] >= -1.f);
    REQUIRE(a.ptr()[i] < 1.f);
  }
  TensorD n = TensorD::normal({1, 1, 8, 8}, r1, 2.0, 0.5);
  CHECK_EQ(n.numel(), 64);
}

TEST_CASE("all_finite flags bad values") {
  TensorF t = TensorF::ones({1, 1, 1, 2});
  CHECK(all_finite(t));
  t.ptr()[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(all_finite(t));
}
