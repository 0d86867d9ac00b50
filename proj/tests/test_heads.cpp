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

#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "gradcheck.hpp"
#include "plainseg/detector.hpp"
#include "plainseg/error.hpp"
#include "tiny_model.hpp"

using namespace plainseg;
using plainseg::testing::grad_check;
using plainseg::testing::tiny_ground_truth;
using plainseg::testing::tiny_image;
using plainseg::testing::tiny_model_config;

namespace {

// Perturbs every parameter so biases and norms are not at their initial constants.
ParamStore perturbed(const ModelConfig& cfg, std::uint64_t seed) {
  ParamStore p = build_model_params(cfg);
  Rng rng(seed);
  for (auto& e : p.entries())
    for (double& v : e.var.mutable_value().storage()) v += uniform(rng, -0.05, 0.05);
  return p;
}

}  // namespace

TEST_CASE("roi level assignment follows the log2 size rule") {
  CascadeConfig cfg;
  const std::vector<Box> boxes = {{0, 0, 112, 112}, {0, 0, 56, 56}, {0, 0, 224, 224},
                                  {0, 0, 8, 8},     {0, 0, 1000, 1000}, {0, 0, 111, 111}};
  CHECK(roi_levels(cfg, boxes) == std::vector<int>{2, 1, 3, 0, 3, 1});
}

TEST_CASE("mask targets and pasting") {
  BinaryMask m(20, 20);
  for (int y = 4; y < 12; ++y)
    for (int x = 6; x < 16; ++x) m.at(y, x) = 1;
  const Box tight{6, 4, 16, 12};
  const auto t = mask_target(m, tight, 7);
  for (double v : t) CHECK(v == 1.0);
  const Box wide{0, 0, 20, 20};
  const auto w = mask_target(m, wide, 10);
  double s = 0;
  for (double v : w) s += v;
  CHECK(s > 0.0);
  CHECK(s < 100.0);

  // All-ones probabilities paste exactly the pixels whose centres lie in the box.
  const std::vector<double> ones(49, 1.0);
  const BinaryMask pasted = paste_mask(ones, 7, {2.3, 3.0, 9.6, 7.5}, 12, 12, 0.5);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      const bool inside = x + 0.5 >= 2.3 && x + 0.5 <= 9.6 && y + 0.5 >= 3.0 && y + 0.5 <= 7.5;
      CHECK(pasted.at(y, x) == (inside ? 1 : 0));
    }
  // Pasting the target of a rectangle back reproduces it.
  const BinaryMask back = paste_mask(t, 7, tight, 20, 20, 0.5);
  CHECK(back == m);
  CHECK(paste_mask(ones, 7, {5, 5, 5, 9}, 12, 12, 0.5).data == BinaryMask(12, 12).data);
}

TEST_CASE("proposals: bounded count, inside the image, sorted") {
  const ModelConfig cfg = tiny_model_config();
  const ParamStore p = perturbed(cfg, 1);
  ag::NoGradGuard ng;
  const auto pyr = build_pyramid(p, cfg.backbone,
                                 backbone_forward(p, cfg.backbone, ag::Var(image_to_tensor(tiny_image(2)))));
  const RpnOutput rpn = rpn_forward(p, cfg.heads, pyr);
  CHECK(rpn.anchors.size() == static_cast<std::size_t>((256 + 64 + 16 + 4 + 1) * 3));
  CHECK(rpn.objectness.shape() == Shape{static_cast<int>(rpn.anchors.size())});
  const auto props = generate_proposals(cfg.heads, rpn, 32, 32);
  CHECK(!props.empty());
  CHECK(static_cast<int>(props.size()) <= cfg.heads.post_nms_topk);
  for (std::size_t i = 0; i < props.size(); ++i) {
    const Box& b = props[i].box;
    CHECK(b.x1 >= 0);
    CHECK(b.y1 >= 0);
    CHECK(b.x2 <= 32);
    CHECK(b.y2 <= 32);
    CHECK(b.width() >= cfg.heads.min_proposal_size);
    if (i) CHECK(props[i - 1].objectness >= props[i].objectness);
  }
}

TEST_CASE("box head rows follow the order of the boxes") {
  const ModelConfig cfg = tiny_model_config();
  const ParamStore p = perturbed(cfg, 2);
  ag::NoGradGuard ng;
  const auto pyr = build_pyramid(p, cfg.backbone,
                                 backbone_forward(p, cfg.backbone, ag::Var(image_to_tensor(tiny_image(3)))));
  const std::vector<Box> boxes = {{1, 1, 10, 9}, {5, 3, 30, 20}, {12, 12, 20, 31}};
  const std::vector<Box> rev(boxes.rbegin(), boxes.rend());
  const auto a = box_head_forward(p, cfg.heads, 1, pyr, boxes);
  const auto b = box_head_forward(p, cfg.heads, 1, pyr, rev);
  const int c = cfg.heads.num_classes + 1;
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < c; ++k) CHECK(a.class_logits.value().at(r, k) == doctest::Approx(b.class_logits.value().at(2 - r, k)).epsilon(1e-12));
    for (int k = 0; k < 4; ++k) CHECK(a.deltas.value().at(r, k) == doctest::Approx(b.deltas.value().at(2 - r, k)).epsilon(1e-12));
  }
  const ag::Var m = mask_head_forward(p, cfg.heads, pyr, boxes);
  CHECK(m.shape() == Shape{3, cfg.heads.num_classes, 6, 6});
}

TEST_CASE("loss terms: names, finiteness and plan replay") {
  const ModelConfig cfg = tiny_model_config();
  const ParamStore p = perturbed(cfg, 3);
  const GroundTruth gt = tiny_ground_truth();
  Rng rng(4);
  ImagePlan plan;
  const LossTerms a = model_losses(p, cfg, tiny_image(5), gt, rng, plan, false);
  const auto va = a.values();
  for (const char* k : {"loss_rpn_cls", "loss_rpn_box", "loss_stage1_cls", "loss_stage1_box",
                        "loss_stage2_cls", "loss_stage2_box", "loss_stage3_cls", "loss_stage3_box",
                        "loss_mask", "loss_total"}) {
    REQUIRE(va.count(k) == 1);
    CHECK(std::isfinite(va.at(k)));
    CHECK(va.at(k) >= 0.0);
  }
  CHECK(plan.stages.size() == 3u);
  CHECK(!plan.mask_rows.empty());
  // GT boxes join the stage-1 candidates, so positives exist.
  int pos = 0;
  for (int l : plan.stages[0].labels) pos += l < cfg.heads.num_classes;
  CHECK(pos > 0);
  Rng other(999);
  const LossTerms b = model_losses(p, cfg, tiny_image(5), gt, other, plan, true);
  CHECK(b.values() == va);
  const double expected = va.at("loss_rpn_cls") + va.at("loss_rpn_box") + va.at("loss_stage1_cls") +
                          va.at("loss_stage1_box") + 0.5 * (va.at("loss_stage2_cls") + va.at("loss_stage2_box")) +
                          0.25 * (va.at("loss_stage3_cls") + va.at("loss_stage3_box")) + va.at("loss_mask");
  CHECK(va.at("loss_total") == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("an image without instances only trains classification") {
  const ModelConfig cfg = tiny_model_config();
  const ParamStore p = perturbed(cfg, 4);
  Rng rng(1);
  ImagePlan plan;
  const auto v = model_losses(p, cfg, tiny_image(6), GroundTruth{}, rng, plan, false).values();
  CHECK(v.at("loss_rpn_box") == 0.0);
  CHECK(v.at("loss_stage1_box") == 0.0);
  CHECK(v.at("loss_mask") == 0.0);
  CHECK(v.at("loss_rpn_cls") > 0.0);
  CHECK(v.at("loss_stage1_cls") > 0.0);
  for (const auto& sp : plan.stages)
    for (int l : sp.labels) CHECK(l == cfg.heads.num_classes);
}

TEST_CASE("total loss gradient matches finite differences") {
  const ModelConfig cfg = tiny_model_config();
  const ParamStore p = perturbed(cfg, 5);
  const GroundTruth gt = tiny_ground_truth();
  const Image img = tiny_image(7);
  Rng rng(8);
  ImagePlan plan;
  model_losses(p, cfg, img, gt, rng, plan, false);
  std::vector<ag::Var> inputs;
  for (const char* n : {"rpn.objectness.weight", "rpn.deltas.weight", "rpn.conv.weight", "cascade.0.fc1.weight",
                        "cascade.1.cls.weight", "cascade.2.box.weight", "cascade.2.box.bias",
                        "mask.conv0.weight", "mask.deconv.weight", "mask.predictor.weight",
                        "pyramid.proj1.weight", "backbone.blocks.1.attn.qkv.weight",
                        "backbone.patch_embed.weight"})
    inputs.push_back(p.get(n));
  const auto r = grad_check(
      [&] {
        Rng unused(0);
        return model_losses(p, cfg, img, gt, unused, plan, true).total;
      },
      inputs, 1e-6, 8);
  CHECK(r.checked > 80u);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("a non-finite parameter fails fast with the loss name") {
  const ModelConfig cfg = tiny_model_config();
  ParamStore p = perturbed(cfg, 6);
  p.entries()[0].var.mutable_value()[0] = std::numeric_limits<double>::quiet_NaN();
  Rng rng(1);
  ImagePlan plan;
  try {
    model_losses(p, cfg, tiny_image(1), tiny_ground_truth(), rng, plan, false);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.quantity().rfind("loss_", 0) == 0);
  }
}

TEST_CASE("inference: bounded, scored, masks at the original size") {
  const ModelConfig cfg = tiny_model_config();
  const ParamStore p = perturbed(cfg, 7);
  Image img(24, 40, 3, 90);
  InferenceTrace trace;
  const auto dets = predict(p, cfg, img, &trace);
  CHECK(trace.scale == doctest::Approx(32.0 / 40.0));
  CHECK(static_cast<int>(dets.size()) <= cfg.heads.max_detections);
  for (const auto& d : dets) {
    CHECK(d.score > cfg.heads.score_threshold);
    CHECK(d.score <= 1.0);
    CHECK(d.mask.height == 24);
    CHECK(d.mask.width == 40);
    CHECK(d.box.x2 <= 40.0);
    CHECK(d.box.y2 <= 24.0);
  }
  for (std::size_t r = 0; r < trace.cascade.final_boxes.size(); ++r) {
    double s = 0.0;
    for (int c = 0; c <= cfg.heads.num_classes; ++c) s += trace.cascade.scores[r * (cfg.heads.num_classes + 1) + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(predict(p, cfg, Image()), DataError);
}

TEST_CASE("postprocess caps detections and respects the score threshold") {
  ModelConfig cfg = tiny_model_config();
  cfg.heads.max_detections = 3;
  cfg.heads.score_threshold = 0.0;
  const ParamStore p = perturbed(cfg, 8);
  const auto dets = predict(p, cfg, tiny_image(9));
  CHECK(dets.size() <= 3u);
  for (std::size_t i = 1; i < dets.size(); ++i) CHECK(dets[i - 1].score >= dets[i].score);
}

TEST_CASE("cascade config validation") {
  CascadeConfig c;
  c.stage_iou_thresholds = {0.5, 0.5, 0.7};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = CascadeConfig{};
  c.stage_loss_weights = {1.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = CascadeConfig{};
  c.anchor_sizes = {32};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("perfect predictions: zero box and mask loss, vanishing classification loss") {
  Tensor pred({3, 4}, {0.1, -0.2, 0.3, 0.0, 1.0, 2.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0});
  const Tensor rw({3}, 1.0);
  CHECK(ag::smooth_l1(ag::Var(pred), pred, rw, 1.0 / 9.0, 3.0).value()[0] == 0.0);
  CHECK(ag::smooth_l1(ag::Var(pred), pred, rw, 1.0, 3.0).value()[0] == 0.0);

  Tensor logits({2, 4}, -10.0);
  logits.at(0, 1) = 10.0;
  logits.at(1, 3) = 10.0;
  CHECK(ag::softmax_cross_entropy(ag::Var(logits), std::vector<int>{1, 3}, 2.0).value()[0] < 1e-3);

  Tensor mlog({1, 4}, {20.0, -20.0, 20.0, -20.0});
  const Tensor target({1, 4}, {1.0, 0.0, 1.0, 0.0}), w({1, 4}, 1.0);
  CHECK(ag::bce_with_logits(ag::Var(mlog), target, w, 4.0).value()[0] < 1e-3);
}

TEST_CASE("losses do not depend on the order of sampled proposals") {
  const ModelConfig cfg = tiny_model_config();
  const ParamStore p = perturbed(cfg, 9);
  const GroundTruth gt = tiny_ground_truth();
  const Image img = tiny_image(10);
  Rng rng(3);
  ImagePlan plan;
  const auto base = model_losses(p, cfg, img, gt, rng, plan, false).values();

  ImagePlan shuffled = plan;
  Rng prng(12);
  auto permute = [&](std::size_t n) {
    std::vector<int> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
    std::shuffle(perm.begin(), perm.end(), prng);
    return perm;
  };
  const auto rp = permute(plan.rpn_sampled.size());
  for (std::size_t i = 0; i < rp.size(); ++i) {
    shuffled.rpn_sampled[i] = plan.rpn_sampled[rp[i]];
    shuffled.rpn_labels[i] = plan.rpn_labels[rp[i]];
    shuffled.rpn_matched[i] = plan.rpn_matched[rp[i]];
  }
  std::vector<int> last_inverse;
  for (std::size_t s = 0; s < plan.stages.size(); ++s) {
    const auto sp = permute(plan.stages[s].boxes.size());
    for (std::size_t i = 0; i < sp.size(); ++i) {
      shuffled.stages[s].boxes[i] = plan.stages[s].boxes[sp[i]];
      shuffled.stages[s].labels[i] = plan.stages[s].labels[sp[i]];
      shuffled.stages[s].matched[i] = plan.stages[s].matched[sp[i]];
    }
    last_inverse.assign(sp.size(), 0);
    for (std::size_t i = 0; i < sp.size(); ++i) last_inverse[sp[i]] = static_cast<int>(i);
  }
  for (int& r : shuffled.mask_rows) r = last_inverse[r];
  std::sort(shuffled.mask_rows.begin(), shuffled.mask_rows.end());

  Rng unused(0);
  const auto again = model_losses(p, cfg, img, gt, unused, shuffled, true).values();
  for (const auto& [k, v] : base) CHECK_MESSAGE(again.at(k) == doctest::Approx(v).epsilon(1e-12), k);
}
