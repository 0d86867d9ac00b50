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

// COCO-protocol average precision for instance masks (or boxes): greedy
// per-image matching, 101-point interpolated AP, means over categories and
// IoU thresholds, plus a rare-category breakdown.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plainseg/coco.hpp"

namespace plainseg {

enum class IouKind { kMask, kBox };

struct EvalConfig {
  std::vector<double> iou_thresholds = default_thresholds();
  int max_dets_per_image = 100;
  IouKind iou_kind = IouKind::kMask;
  int recall_points = 101;

  void validate() const;
  // 0.50, 0.55, ..., 0.95
  static std::vector<double> default_thresholds();
};

struct ImageMatch {
  std::vector<int> order;         // detection indices considered, best score first
  std::vector<int> det_gt;        // per entry of `order`: matched GT (crowd included) or -1
  std::vector<bool> det_ignored;  // matched a crowd region
  std::vector<bool> gt_matched;
};

// One image, one category. ious[d * num_gt + g]; crowd GTs use the
// intersection-over-detection overlap. Detections are visited by descending
// score (ties: lower index first), at most max_dets of them. Each takes the
// unmatched non-crowd GT of highest IoU >= threshold (ties: lowest GT
// index); failing that, a crowd GT with IoU >= threshold marks it ignored.
ImageMatch match_image(const std::vector<double>& scores, const std::vector<double>& ious,
                       const std::vector<bool>& gt_crowd, double threshold, int max_dets);

// `is_tp` lists non-ignored detections in descending score order. Running
// max of precision from high to low recall, sampled where recall first
// reaches k / (recall_points - 1). Absent when num_gt is 0.
std::optional<double> average_precision(const std::vector<bool>& is_tp, std::int64_t num_gt,
                                        int recall_points);

struct EvalReport {
  std::optional<double> map;
  std::optional<double> ap50;
  std::optional<double> ap75;
  std::optional<double> rare_map;
  std::map<int, std::optional<double>> per_category;  // every manifest category
  // Counts at the first IoU threshold.
  std::int64_t matched = 0;
  std::int64_t unmatched_detections = 0;
  std::int64_t unmatched_gt = 0;

  bool operator==(const EvalReport&) const = default;
};

// Throws DanglingReferenceError naming the first detection with an unknown
// image or category and DimensionError for masks of the wrong size.
EvalReport evaluate(const std::vector<DetectionResult>& detections, const DatasetManifest& manifest,
                    const EvalConfig& cfg);

// "52.68" for 0.5268; an em dash for absent values.
std::string format_percent(const std::optional<double>& v);
std::string render_report_text(const EvalReport& report, const DatasetManifest& manifest);
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

}  // namespace plainseg
