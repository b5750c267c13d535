#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cain/tensor.h"

namespace cain {

// 8-bit raster, interleaved row-major; channels is 1 (gray) or 3 (RGB).
struct Image8 {
  int64_t width = 0, height = 0, channels = 0;
  std::vector<uint8_t> pixels;

  int64_t size_bytes() const { return width * height * channels; }
  uint8_t& at(int64_t y, int64_t x, int64_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  uint8_t at(int64_t y, int64_t x, int64_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

Image8 read_png(const std::string& path);
// Deterministic encoder settings: identical pixels give identical bytes.
void write_png(const std::string& path, const Image8& img);

// Pixel coding: byte v maps to v/127.5 - 1 and back (round, clamp).
Tensor<float> image_to_tensor(const Image8& img);            // (1,3,h,w)
Image8 tensor_to_image(const Tensor<float>& t);              // from (1,3,h,w)
// Masks: 255 = known, 0 = missing; thresholded at 128 on read.
Tensor<float> mask_image_to_tensor(const Image8& img);       // (1,1,h,w)
Image8 mask_tensor_to_image(const Tensor<float>& m);

}  // namespace cain
