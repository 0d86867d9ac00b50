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

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "plainseg/geometry.hpp"
#include "plainseg/rle.hpp"
#include "plainseg/tensor.hpp"

namespace plainseg {

// Interleaved 8-bit image, row-major, `channels` values per pixel.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int h, int w, int c = 3, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  std::uint8_t* px(int y, int x) { return &pixels[(static_cast<std::size_t>(y) * width + x) * channels]; }
  const std::uint8_t* px(int y, int x) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * channels];
  }
  bool operator==(const Image&) const = default;
};

using Rgb = std::array<std::uint8_t, 3>;

// PNG I/O through libpng. Grey and RGBA inputs are converted to RGB.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& image);

Image resize_bilinear(const Image& src, int height, int width);

// [3,H,W] float tensor with per-channel normalization (x/255 - mean) / std.
Tensor image_to_tensor(const Image& image);

// Overlay helpers for previews and inference output.
void blend_mask(Image& image, const BinaryMask& mask, const Rgb& color, double alpha);
void draw_box(Image& image, const BoundingBox& box, const Rgb& color);
// Digits, '.', '%' and '-' in a 3x5 bitmap font, scaled by `scale`.
void draw_text(Image& image, int x, int y, const std::string& text, const Rgb& color, int scale = 1);
Rgb palette_color(int index);

}  // namespace plainseg
