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

#include <algorithm>

namespace plainseg {

// COCO-style box: top-left corner plus extent, in pixels.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  bool operator==(const BoundingBox&) const = default;
};

// Corner form used inside the detector.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool operator==(const Box&) const = default;
};

inline Box to_corners(const BoundingBox& b) { return {b.x, b.y, b.x + b.w, b.y + b.h}; }
inline BoundingBox to_xywh(const Box& b) { return {b.x1, b.y1, b.x2 - b.x1, b.y2 - b.y1}; }

inline Box clip_box(const Box& b, double height, double width) {
  return {std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
          std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
}

// Intersection over union; 0 when the union is empty.
double box_iou(const BoundingBox& a, const BoundingBox& b);
double box_iou(const Box& a, const Box& b);

}  // namespace plainseg
