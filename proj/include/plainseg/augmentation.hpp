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

// Large-scale jittering: rescale by a factor drawn uniformly from
// [scale_min, scale_max] with the aspect ratio kept, then pad (content at the
// top-left) or randomly crop to a crop_size square. Boxes and masks follow
// the same geometric map.

#include <cstdint>
#include <string>
#include <vector>

#include "plainseg/coco.hpp"
#include "plainseg/image.hpp"
#include "plainseg/rng.hpp"

namespace plainseg {

struct AugmentConfig {
  double scale_min = 0.1;
  double scale_max = 2.0;
  int crop_size = 256;
  int pad_value = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AugmentedSample {
  Image image;  // crop_size x crop_size
  std::vector<InstanceAnnotation> annotations;
  double applied_scale = 1.0;
  int offset_x = 0;  // crop origin inside the rescaled image
  int offset_y = 0;
  int content_height = 0;  // rescaled image size before pad/crop
  int content_width = 0;
};

double sample_scale(Rng& rng, const AugmentConfig& cfg);

// Rescaled size for an h x w image: each side rounded, at least 1.
std::pair<int, int> scaled_size(int height, int width, double scale);

// Image: bilinear. Masks: nearest (source pixel floor((y + 0.5) / s')).
// `rng` supplies the crop offsets and is only consumed when a side exceeds
// crop_size. Instances with no pixel left inside the crop are dropped.
AugmentedSample lsj_transform(const Image& image, const std::vector<InstanceAnnotation>& annotations,
                              double scale, const AugmentConfig& cfg, Rng& rng);

// Seeded per (cfg.seed, image id); used by training and previews alike.
AugmentedSample augment_image(const Image& image, std::int64_t image_id,
                              const std::vector<InstanceAnnotation>& annotations,
                              const AugmentConfig& cfg, std::uint64_t stream = 0);

struct PreviewRecord {
  std::int64_t image_id = 0;
  double scale = 1.0;
  int offset_x = 0;
  int offset_y = 0;
  std::vector<std::int64_t> surviving_ids;
  std::string image_path;
  std::string sidecar_path;
};

// Writes n previews (images taken in manifest order, cycling) as
// preview_NNNN.png plus preview_NNNN.json under out_dir.
std::vector<PreviewRecord> augment_preview(const DatasetManifest& manifest,
                                           const std::string& dataset_dir, const AugmentConfig& cfg,
                                           int n, const std::string& out_dir);

}  // namespace plainseg
