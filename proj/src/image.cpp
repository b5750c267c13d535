#include "cain/image.h"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace cain {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image8 read_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  check(f != nullptr, "read_png: cannot open '" + path + "'");

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "read_png: failed to initialize");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("read_png: failed to initialize");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("read_png: '" + path + "' is not a valid PNG");
  }

  png_init_io(png, f.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color = png_get_color_type(png, info);

  // normalize everything to 8-bit gray or RGB
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  color = png_get_color_type(png, info);
  int64_t channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;

  Image8 img;
  img.width = w;
  img.height = h;
  img.channels = channels;
  img.pixels.resize(img.size_bytes());

  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.pixels.data() + static_cast<int64_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const Image8& img) {
  check(img.width >= 1 && img.height >= 1,
        "write_png: empty image for '" + path + "'");
  check(img.channels == 1 || img.channels == 3,
        "write_png: channels must be 1 or 3");
  check(static_cast<int64_t>(img.pixels.size()) == img.size_bytes(),
        "write_png: pixel buffer size mismatch");

  FilePtr f(std::fopen(path.c_str(), "wb"));
  check(f != nullptr, "write_png: cannot open '" + path + "'");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "write_png: failed to initialize");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("write_png: failed to initialize");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("write_png: encoding '" + path + "' failed");
  }

  png_init_io(png, f.get());
  // pinned settings so the byte stream is a pure function of the pixels
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_bytep> rows(img.height);
  for (int64_t y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.pixels.data() +
                                    y * img.width * img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

Tensor<float> image_to_tensor(const Image8& img) {
  check(img.channels == 3, "image_to_tensor: RGB input required");
  Tensor<float> t = Tensor<float>::zeros({1, 3, img.height, img.width});
  float* p = t.ptr();
  int64_t plane = img.height * img.width;
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int64_t c = 0; c < 3; ++c)
        p[c * plane + y * img.width + x] =
            static_cast<float>(img.at(y, x, c)) / 127.5f - 1.0f;
  return t;
}

Image8 tensor_to_image(const Tensor<float>& t) {
  check(t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 3,
        "tensor_to_image: (1,3,h,w) required, got " + shape_str(t.dims()));
  Image8 img;
  img.height = t.dim(2);
  img.width = t.dim(3);
  img.channels = 3;
  img.pixels.resize(img.size_bytes());
  const float* p = t.ptr();
  int64_t plane = img.height * img.width;
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        float v = (p[c * plane + y * img.width + x] + 1.0f) * 127.5f;
        long r = std::lroundf(v);
        img.at(y, x, c) = static_cast<uint8_t>(std::clamp(r, 0L, 255L));
      }
  return img;
}

Tensor<float> mask_image_to_tensor(const Image8& img) {
  check(img.channels == 1, "mask_image_to_tensor: grayscale input required");
  Tensor<float> m = Tensor<float>::zeros({1, 1, img.height, img.width});
  float* p = m.ptr();
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      p[y * img.width + x] = img.at(y, x, 0) >= 128 ? 1.0f : 0.0f;
  return m;
}

Image8 mask_tensor_to_image(const Tensor<float>& m) {
  check(m.rank() == 4 && m.dim(0) == 1 && m.dim(1) == 1,
        "mask_tensor_to_image: (1,1,h,w) required, got " +
            shape_str(m.dims()));
  Image8 img;
  img.height = m.dim(2);
  img.width = m.dim(3);
  img.channels = 1;
  img.pixels.resize(img.size_bytes());
  const float* p = m.ptr();
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      img.at(y, x, 0) = p[y * img.width + x] >= 0.5f ? 255 : 0;
  return img;
}

}  // namespace cain
