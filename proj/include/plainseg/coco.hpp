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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plainseg/geometry.hpp"
#include "plainseg/rle.hpp"

namespace plainseg {

struct CategoryDef {
  int id = 0;
  std::string name;
  bool is_rare = false;  // stands in for the accessibility-related classes

  bool operator==(const CategoryDef&) const = default;
};

struct ImageInfo {
  std::int64_t id = 0;
  std::string file_name;
  int height = 0;
  int width = 0;

  bool operator==(const ImageInfo&) const = default;
};

struct InstanceAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  int category_id = 0;
  BoundingBox bbox;
  RleMask mask;
  double area = 0.0;
  bool iscrowd = false;

  bool operator==(const InstanceAnnotation&) const = default;
};

struct DatasetManifest {
  std::vector<ImageInfo> images;
  std::vector<InstanceAnnotation> annotations;
  std::vector<CategoryDef> categories;

  const ImageInfo* find_image(std::int64_t id) const;
  const CategoryDef* find_category(int id) const;
  bool operator==(const DatasetManifest&) const = default;
};

// A predicted instance in COCO results form.
struct DetectionResult {
  std::int64_t image_id = 0;
  int category_id = 0;
  BoundingBox bbox;
  double score = 0.0;
  RleMask mask;

  bool operator==(const DetectionResult&) const = default;
};

// Parses COCO instance JSON. Polygons are rasterized with the pixel-centre
// rule; area and bbox are recomputed from the resulting mask.
DatasetManifest parse_coco_json(const std::string& text);
DatasetManifest load_coco_json(const std::string& path);
std::string serialize_coco_json(const DatasetManifest& manifest);

// Checks unique ids and that every annotation references a known image and category.
void validate_manifest(const DatasetManifest& manifest);

// COCO results format: [{image_id, category_id, bbox, score, segmentation}].
std::vector<DetectionResult> parse_results_json(const std::string& text);
std::string serialize_results_json(const std::vector<DetectionResult>& results);

struct DatasetStats {
  std::map<int, std::size_t> per_category;  // every manifest category, possibly 0
  std::size_t total = 0;
  std::size_t rare = 0;
  std::optional<double> rare_fraction;      // absent when there are no instances
};

DatasetStats dataset_stats(const DatasetManifest& manifest);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace plainseg
