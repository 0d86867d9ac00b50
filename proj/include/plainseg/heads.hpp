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

// Cascade Mask R-CNN on a feature pyramid: RPN, three box stages trained at
// increasing IoU thresholds with class-agnostic regression, and a mask head
// with one 28x28 logit map per class.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "plainseg/backbone.hpp"
#include "plainseg/box_ops.hpp"
#include "plainseg/rle.hpp"

namespace plainseg {

struct CascadeConfig {
  int num_classes = 5;
  // One anchor size per pyramid level, finest first.
  std::vector<double> anchor_sizes = {16, 32, 64, 128, 256};
  std::vector<double> aspect_ratios = {0.5, 1.0, 2.0};

  double rpn_iou_low = 0.3;
  double rpn_iou_high = 0.7;
  int rpn_batch = 256;
  double rpn_positive_fraction = 0.5;
  double rpn_smooth_l1_beta = 1.0 / 9.0;
  int pre_nms_topk = 256;  // per level
  int post_nms_topk = 64;  // per image
  double rpn_nms_threshold = 0.7;
  double min_proposal_size = 1.0;

  int roi_batch = 32;
  double roi_positive_fraction = 0.25;
  double roi_smooth_l1_beta = 1.0;
  std::vector<double> stage_iou_thresholds = {0.5, 0.6, 0.7};
  std::vector<double> stage_loss_weights = {1.0, 0.5, 0.25};
  std::vector<BoxCoderWeights> stage_box_weights = {{10, 10, 5, 5}, {20, 20, 10, 10}, {30, 30, 15, 15}};

  int box_pool = 7;
  int mask_pool = 14;
  int sampling_ratio = 2;
  int box_fc_dim = 128;
  int mask_conv_dim = 32;
  int mask_num_convs = 4;
  // RoIs of side canonical_box_size pool from level canonical_level; only the
  // first roi_levels pyramid levels are used by the RoI heads.
  double canonical_box_size = 112.0;
  int canonical_level = 2;
  int roi_levels = 4;

  double score_threshold = 0.05;
  double nms_threshold = 0.5;
  int max_detections = 100;
  double mask_threshold = 0.5;

  void validate() const;
  int num_stages() const { return static_cast<int>(stage_iou_thresholds.size()); }
  int anchors_per_cell() const { return static_cast<int>(aspect_ratios.size()); }
  int mask_size() const { return 2 * mask_pool; }
};

// Registers "rpn.", "cascade.<s>." and "mask." tensors. Feature width comes
// from the backbone config.
void init_head_params(ParamStore& params, const CascadeConfig& cfg, int channels, std::uint64_t seed);

struct GroundTruth {
  std::vector<Box> boxes;
  std::vector<int> classes;  // contiguous 0..K-1
  std::vector<BinaryMask> masks;
};

struct RpnOutput {
  ag::Var objectness;  // [A_total] logits, anchors in generate_anchors order per level
  ag::Var deltas;      // [A_total, 4]
  std::vector<Box> anchors;
  std::vector<int> level_of_anchor;
};

RpnOutput rpn_forward(const ParamStore& params, const CascadeConfig& cfg, const FeaturePyramid& pyr);

struct Proposal {
  Box box;
  double objectness = 0.0;  // logit
  int level = 0;
};

// Top pre_nms_topk per level, decode, clip, drop boxes thinner than
// min_proposal_size, per-level NMS, then the post_nms_topk best overall.
std::vector<Proposal> generate_proposals(const CascadeConfig& cfg, const RpnOutput& rpn,
                                         double img_h, double img_w);

// Pyramid level index for each RoI.
std::vector<int> roi_levels(const CascadeConfig& cfg, std::span<const Box> boxes);

struct BoxHeadOutput {
  ag::Var class_logits;  // [R, K+1], background last
  ag::Var deltas;        // [R, 4]
};

BoxHeadOutput box_head_forward(const ParamStore& params, const CascadeConfig& cfg, int stage,
                               const FeaturePyramid& pyr, std::span<const Box> boxes);

// [R, K, 2*mask_pool, 2*mask_pool] logits.
ag::Var mask_head_forward(const ParamStore& params, const CascadeConfig& cfg,
                          const FeaturePyramid& pyr, std::span<const Box> boxes);

// Every discrete choice made by one training forward pass. Replaying a plan
// makes the loss a smooth function of the parameters.
struct StagePlan {
  std::vector<Box> boxes;
  std::vector<int> labels;   // class index or num_classes for background
  std::vector<int> matched;  // GT index, -1 for background
};

struct ImagePlan {
  std::vector<int> rpn_sampled;  // anchor indices
  std::vector<int> rpn_labels;   // 1 / 0 per sampled anchor
  std::vector<int> rpn_matched;  // GT index per sampled anchor (-1 if none)
  std::vector<StagePlan> stages;
  std::vector<int> mask_rows;    // rows of the last stage used by the mask loss
};

struct LossTerms {
  ag::Var rpn_cls, rpn_box;
  std::vector<ag::Var> stage_cls, stage_box;
  ag::Var mask;
  ag::Var total;

  // loss_rpn_cls, loss_rpn_box, loss_stage{1,2,3}_{cls,box}, loss_mask, loss_total.
  std::map<std::string, double> values() const;
};

// Builds the plan (when `replay` is false; rng drives anchor and RoI
// sampling) or reuses it, then evaluates every loss term. Throws
// NumericError naming the first non-finite term.
LossTerms compute_losses(const ParamStore& params, const CascadeConfig& cfg,
                         const FeaturePyramid& pyr, const GroundTruth& gt, double img_h,
                         double img_w, Rng& rng, ImagePlan& plan, bool replay);

struct CascadeOutput {
  std::vector<std::vector<Box>> stage_inputs;  // boxes fed to each stage
  std::vector<Box> final_boxes;                // last stage's regression output
  std::vector<std::vector<double>> stage_probs;  // [R * (K+1)] per stage
  std::vector<double> scores;                  // [R * (K+1)], mean over stages
};

CascadeOutput cascade_forward(const ParamStore& params, const CascadeConfig& cfg,
                              const FeaturePyramid& pyr, std::span<const Proposal> proposals,
                              double img_h, double img_w);

struct Detection {
  Box box;
  int label = 0;  // contiguous class index
  double score = 0.0;
  BinaryMask mask;
};

// Per-class score threshold and NMS, top max_detections, then masks pasted
// at out_h x out_w with boxes multiplied by `box_scale`.
std::vector<Detection> postprocess(const ParamStore& params, const CascadeConfig& cfg,
                                   const FeaturePyramid& pyr, const CascadeOutput& out,
                                   int out_h, int out_w, double box_scale);

// Bilinearly resizes a probability map to the box and thresholds it. Only
// pixels whose centres fall inside the box can be set.
BinaryMask paste_mask(const std::vector<double>& probs, int size, const Box& box, int height,
                      int width, double threshold);

// GT mask cropped to `box` and resampled to size x size, binarized at 0.5.
std::vector<double> mask_target(const BinaryMask& mask, const Box& box, int size);

}  // namespace plainseg
