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
#include <string>
#include <vector>

#include "plainseg/coco.hpp"
#include "plainseg/image.hpp"

namespace plainseg {

enum class ShapeKind { kDisk, kSquare, kTriangle, kCross, kRing };

// Synthetic long-tailed shapes dataset. Categories 1..5 are disk, square,
// triangle, cross and ring; the last two are the rare classes.
struct ToyDatasetConfig {
  int num_images = 20;
  int image_size = 128;
  // Relative frequency per category id 1..5; sums to 1. The rare group is
  // rescaled to `rare_fraction_target` with within-group ratios preserved.
  std::vector<double> category_weights = {0.30, 0.27, 0.25, 0.10, 0.08};
  double rare_fraction_target = 0.18;
  int min_shapes = 2;
  int max_shapes = 4;
  int min_shape_size = 24;  // bounding-box side, pixels
  int max_shape_size = 56;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ToyDataset {
  DatasetManifest manifest;
  std::vector<Image> images;  // parallel to manifest.images
};

std::vector<CategoryDef> toy_categories();

// Deterministic for a fixed config. Shapes never overlap, so every mask is
// exact and its bbox tight. File names are "images/NNNNNN.png".
ToyDataset generate_toy_dataset(const ToyDatasetConfig& cfg);

// Pixel-exact mask of one shape whose bounding square has top-left (x0, y0) and side `size`.
BinaryMask render_shape_mask(ShapeKind kind, double x0, double y0, double size, int height,
                             int width);

// Writes images/ and annotations.json under `dir`.
void write_toy_dataset(const ToyDataset& ds, const std::string& dir);

}  // namespace plainseg
