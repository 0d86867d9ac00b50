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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plainseg/geometry.hpp"

namespace plainseg {

// Dense binary mask, row-major (index y * width + x), values 0 or 1.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const BinaryMask&) const = default;
};

// Run-length encoded mask in COCO's convention: runs over the column-major
// pixel order, alternating 0s and 1s, starting with a (possibly empty) run of 0s.
struct RleMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  bool operator==(const RleMask&) const = default;
};

RleMask rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const RleMask& rle);

// Throws MalformedRleError unless counts sum to height*width and no interior run is 0.
void rle_validate(const RleMask& rle);

std::uint64_t rle_area(const RleMask& rle);
// Tight box of the set pixels; all-zero box for an empty mask.
BoundingBox rle_bbox(const RleMask& rle);
std::uint64_t rle_intersection_area(const RleMask& a, const RleMask& b);

// |a & b| / |a | b|, or |a & b| / |a| when b is a crowd region. 0 on an empty denominator.
double mask_iou(const RleMask& a, const RleMask& b, bool b_is_crowd);

// ious[d * gts.size() + g] for every detection/ground-truth pair.
std::vector<double> mask_iou_matrix(std::span<const RleMask> dts, std::span<const RleMask> gts,
                                    std::span<const std::uint8_t> gt_is_crowd);
namespace ref {
std::vector<double> mask_iou_matrix(std::span<const RleMask> dts, std::span<const RleMask> gts,
                                    std::span<const std::uint8_t> gt_is_crowd);
}

// COCO's compact ASCII form of the counts ("compressed RLE").
std::string rle_counts_to_string(const RleMask& rle);
RleMask rle_counts_from_string(const std::string& s, int height, int width);

// Even-odd rasterization: a pixel is set when its centre lies inside the
// polygon. `xy` holds x0,y0,x1,y1,... Multiple polygons are unioned.
BinaryMask rasterize_polygons(const std::vector<std::vector<double>>& polygons, int height,
                              int width);

}  // namespace plainseg
