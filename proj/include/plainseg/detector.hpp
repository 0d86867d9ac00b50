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

// The full model: plain ViT backbone, simple pyramid and cascade heads,
// with training-time loss evaluation and letterboxed inference.

#include <vector>

#include "plainseg/augmentation.hpp"
#include "plainseg/backbone.hpp"
#include "plainseg/heads.hpp"

namespace plainseg {

struct ModelConfig {
  BackboneConfig backbone;
  CascadeConfig heads;

  void validate() const;
};

ParamStore build_model_params(const ModelConfig& cfg);

// Fresh Vars holding copies of every value (grads are not copied).
ParamStore clone_params(const ParamStore& params);

// Maps category ids to contiguous class indices in manifest order.
struct CategoryMap {
  std::vector<int> ids;  // index -> category id
  std::vector<bool> rare;
  int index_of(int category_id) const;
};
CategoryMap make_category_map(const std::vector<CategoryDef>& categories);

GroundTruth ground_truth_from(const std::vector<InstanceAnnotation>& anns, const CategoryMap& cats);

// Forward on an img_size square image and every loss term. See compute_losses.
LossTerms model_losses(const ParamStore& params, const ModelConfig& cfg, const Image& image,
                       const GroundTruth& gt, Rng& rng, ImagePlan& plan, bool replay);

struct InferenceTrace {
  std::vector<Proposal> proposals;
  CascadeOutput cascade;
  double scale = 1.0;  // letterbox factor from original to model input
};

// Letterboxes the image (long side to img_size, pad bottom/right with 0),
// runs the cascade and maps boxes and masks back to the original size.
std::vector<Detection> predict(const ParamStore& params, const ModelConfig& cfg, const Image& image,
                               InferenceTrace* trace = nullptr);

std::vector<DetectionResult> to_results(const std::vector<Detection>& dets, std::int64_t image_id,
                                        const CategoryMap& cats);

// Runs predict on every image, in manifest order.
std::vector<DetectionResult> predict_dataset(const ParamStore& params, const ModelConfig& cfg,
                                             const DatasetManifest& manifest,
                                             const std::vector<Image>& images);

}  // namespace plainseg
