#include "cain/textures.h"

#include <cmath>

namespace cain {

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor<float> grating(int64_t size, Rng& rng) {
  Tensor<float> t = Tensor<float>::zeros({1, 3, size, size});
  // quantized orientation and integer cycle count keep the family compact
  // enough that a handful of samples is representative; phase stays free
  // because the patterns are translation-alike anyway
  double angle = kPi / 4.0 * static_cast<double>(rng.uniform_int(0, 3));
  double cycles = static_cast<double>(rng.uniform_int(2, 4));
  double phase = rng.uniform(0.0, 2.0 * kPi);
  double fx = std::cos(angle) * cycles / static_cast<double>(size);
  double fy = std::sin(angle) * cycles / static_cast<double>(size);
  float* p = t.ptr();
  int64_t plane = size * size;
  for (int64_t c = 0; c < 3; ++c) {
    double amp = rng.uniform(0.6, 0.8);
    double off = rng.uniform(-0.05, 0.05);
    double ch_phase = phase + c * 0.4;
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x)
        p[c * plane + y * size + x] = static_cast<float>(
            off + amp * std::sin(2.0 * kPi * (fx * x + fy * y) + ch_phase));
  }
  return t;
}

Tensor<float> checkerboard(int64_t size, Rng& rng) {
  Tensor<float> t = Tensor<float>::zeros({1, 3, size, size});
  int64_t cell = rng.uniform_int(size / 8, std::max<int64_t>(size / 8 + 1, size / 4));
  float* p = t.ptr();
  int64_t plane = size * size;
  for (int64_t c = 0; c < 3; ++c) {
    double a = rng.uniform(-0.9, 0.9);
    double b = rng.uniform(-0.9, 0.9);
    for (int64_t y = 0; y < size; ++y)
      for (int64_t x = 0; x < size; ++x) {
        bool even = ((y / cell) + (x / cell)) % 2 == 0;
        p[c * plane + y * size + x] = static_cast<float>(even ? a : b);
      }
  }
  return t;
}

Tensor<float> gradient_blend(int64_t size, Rng& rng) {
  Tensor<float> t = Tensor<float>::zeros({1, 3, size, size});
  float* p = t.ptr();
  int64_t plane = size * size;
  for (int64_t c = 0; c < 3; ++c) {
    double tl = rng.uniform(-0.9, 0.9), tr = rng.uniform(-0.9, 0.9);
    double bl = rng.uniform(-0.9, 0.9), br = rng.uniform(-0.9, 0.9);
    for (int64_t y = 0; y < size; ++y) {
      double v = size == 1 ? 0.0 : static_cast<double>(y) / (size - 1);
      for (int64_t x = 0; x < size; ++x) {
        double u = size == 1 ? 0.0 : static_cast<double>(x) / (size - 1);
        double top = tl * (1 - u) + tr * u;
        double bot = bl * (1 - u) + br * u;
        p[c * plane + y * size + x] =
            static_cast<float>(top * (1 - v) + bot * v);
      }
    }
  }
  return t;
}

}  // namespace

Tensor<float> make_texture(int64_t kind, int64_t size, Rng& rng) {
  check(size >= 8, "make_texture: size must be at least 8");
  switch (kind % 3) {
    case 0:
      return grating(size, rng);
    case 1:
      return checkerboard(size, rng);
    default:
      return gradient_blend(size, rng);
  }
}

std::vector<Tensor<float>> make_dataset(int64_t count, int64_t size,
                                        uint64_t seed) {
  check(count >= 1, "make_dataset: count must be positive");
  Rng rng(seed, /*stream=*/5);
  std::vector<Tensor<float>> out;
  out.reserve(count);
  for (int64_t i = 0; i < count; ++i)
    out.push_back(make_texture(i, size, rng));
  return out;
}

}  // namespace cain
