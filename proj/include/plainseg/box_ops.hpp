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

// Anchors, the (dx, dy, dw, dh) box parameterization, greedy NMS and IoU
// target assignment.

#include <array>
#include <span>
#include <vector>

#include "plainseg/geometry.hpp"
#include "plainseg/rng.hpp"

namespace plainseg {

struct BoxCoderWeights {
  double wx = 1.0, wy = 1.0, ww = 1.0, wh = 1.0;
};

using Deltas = std::array<double, 4>;

// Clamp applied to dw, dh before exponentiation.
inline constexpr double kLogScaleClamp = 4.0;

// Anchors for one level of h x w cells, row-major over cells then in
// `ratios` order. Centres sit at ((x + 0.5) * stride, (y + 0.5) * stride);
// ratio is height / width and every anchor has area size^2.
std::vector<Box> generate_anchors(int height, int width, int stride, double size,
                                  std::span<const double> ratios);

Deltas encode_box(const Box& src, const Box& target, const BoxCoderWeights& w);
Box decode_box(const Box& src, const Deltas& d, const BoxCoderWeights& w);
// Decodes every row then clips to the image.
std::vector<Box> decode_boxes(std::span<const Box> src, std::span<const Deltas> deltas,
                              const BoxCoderWeights& w, double img_h, double img_w);

// Greedy suppression in descending score order (ties: lower index first);
// a box is dropped when its IoU with a kept box exceeds iou_threshold.
std::vector<int> nms(std::span<const Box> boxes, std::span<const double> scores,
                     double iou_threshold);
// NMS applied independently within each group id; result sorted by score.
std::vector<int> batched_nms(std::span<const Box> boxes, std::span<const double> scores,
                             std::span<const int> groups, double iou_threshold);

struct Assignment {
  std::vector<int> matched_gt;    // index of the best GT, -1 when there are none
  std::vector<double> max_iou;
  std::vector<int> label;         // 1 positive, 0 negative, -1 ignored
};

// Best-IoU matching with lowest-index tie-break. Positive iff IoU >= threshold.
Assignment assign_targets(std::span<const Box> boxes, std::span<const Box> gts, double threshold);

// Two-threshold variant for the RPN: positive >= high, negative < low,
// ignored in between; each GT additionally claims the boxes that reach its
// highest IoU (when that IoU is > 0).
Assignment assign_anchors(std::span<const Box> anchors, std::span<const Box> gts, double low,
                          double high);

// Randomly keeps at most num * positive_fraction positives and fills the
// remainder with negatives. Returns the kept indices, positives first.
std::vector<int> sample_labels(std::span<const int> labels, int num, double positive_fraction,
                               Rng& rng);

}  // namespace plainseg
