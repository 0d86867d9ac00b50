/* Copyright 2026 The plainseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "plainseg/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "plainseg/error.hpp"
#include "plainseg/kernels.hpp"

namespace plainseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image: " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8)) {
    throw DataError("not a PNG file: " + path);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Image img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = 3;
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height * 3, 0);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = img.px(y, 0);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const Image& image) {
  if (image.channels != 3 && image.channels != 1) throw IoError("write_png: need 1 or 3 channels");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  std::vector<png_const_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = image.px(y, 0);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image resize_bilinear(const Image& src, int height, int width) {
  Image dst(height, width, src.channels);
  kernels::resize_bilinear_u8(src.pixels.data(), src.height, src.width, src.channels,
                              dst.pixels.data(), height, width);
  return dst;
}

Tensor image_to_tensor(const Image& image) {
  static constexpr double kMean[3] = {0.485, 0.456, 0.406};
  static constexpr double kStd[3] = {0.229, 0.224, 0.225};
  Tensor t({3, image.height, image.width});
  for (int c = 0; c < 3; ++c) {
    const int src_c = image.channels == 1 ? 0 : c;
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        t.at(c, y, x) = (image.px(y, x)[src_c] / 255.0 - kMean[c]) / kStd[c];
  }
  return t;
}

void blend_mask(Image& image, const BinaryMask& mask, const Rgb& color, double alpha) {
  for (int y = 0; y < std::min(image.height, mask.height); ++y)
    for (int x = 0; x < std::min(image.width, mask.width); ++x) {
      if (!mask.at(y, x)) continue;
      std::uint8_t* p = image.px(y, x);
      for (int c = 0; c < 3; ++c)
        p[c] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * p[c] + alpha * color[c]));
    }
}

void draw_box(Image& image, const BoundingBox& box, const Rgb& color) {
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y)));
  const int x1 = std::min(image.width - 1, static_cast<int>(std::ceil(box.x + box.w)) - 1);
  const int y1 = std::min(image.height - 1, static_cast<int>(std::ceil(box.y + box.h)) - 1);
  if (x1 < x0 || y1 < y0) return;
  auto put = [&](int y, int x) {
    std::uint8_t* p = image.px(y, x);
    p[0] = color[0];
    p[1] = color[1];
    p[2] = color[2];
  };
  for (int x = x0; x <= x1; ++x) {
    put(y0, x);
    put(y1, x);
  }
  for (int y = y0; y <= y1; ++y) {
    put(y, x0);
    put(y, x1);
  }
}

namespace {

// 3x5 glyphs, one row per 3-bit number, MSB on the left.
const std::uint8_t* glyph(char ch) {
  static const std::uint8_t digits[10][5] = {
      {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
      {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}};
  static const std::uint8_t dot[5] = {0, 0, 0, 0, 2};
  static const std::uint8_t percent[5] = {5, 1, 2, 4, 5};
  static const std::uint8_t minus[5] = {0, 0, 7, 0, 0};
  if (ch >= '0' && ch <= '9') return digits[ch - '0'];
  if (ch == '.') return dot;
  if (ch == '%') return percent;
  if (ch == '-') return minus;
  return nullptr;
}

}  // namespace

void draw_text(Image& image, int x, int y, const std::string& text, const Rgb& color, int scale) {
  int cx = x;
  for (char ch : text) {
    if (const std::uint8_t* g = glyph(ch)) {
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 3; ++c) {
          if (!((g[r] >> (2 - c)) & 1)) continue;
          for (int sy = 0; sy < scale; ++sy)
            for (int sx = 0; sx < scale; ++sx) {
              const int py = y + r * scale + sy;
              const int px = cx + c * scale + sx;
              if (py < 0 || px < 0 || py >= image.height || px >= image.width) continue;
              std::uint8_t* p = image.px(py, px);
              p[0] = color[0];
              p[1] = color[1];
              p[2] = color[2];
            }
        }
    }
    cx += 4 * scale;
  }
}

Rgb palette_color(int index) {
  static const Rgb colors[] = {{230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},
                               {245, 130, 48}, {145, 30, 180}, {70, 240, 240}, {240, 50, 230},
                               {210, 245, 60}, {250, 190, 212}};
  return colors[static_cast<unsigned>(index) % 10];
}

}  // namespace plainseg
