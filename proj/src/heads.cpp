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

#include "plainseg/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plainseg/error.hpp"

namespace plainseg {

namespace {

std::string stage_name(int s, const char* leaf) {
  return "cascade." + std::to_string(s) + "." + leaf;
}

ag::Var zero_loss() { return ag::Var(Tensor({1}, 0.0)); }

std::vector<double> flatten(std::span<const Box> boxes) {
  std::vector<double> out;
  out.reserve(boxes.size() * 4);
  for (const Box& b : boxes) out.insert(out.end(), {b.x1, b.y1, b.x2, b.y2});
  return out;
}

std::vector<ag::Var> roi_feature_levels(const CascadeConfig& cfg, const FeaturePyramid& pyr,
                                        std::vector<double>& strides) {
  std::vector<ag::Var> levels(pyr.levels.begin(), pyr.levels.begin() + cfg.roi_levels);
  strides.assign(pyr.strides.begin(), pyr.strides.begin() + cfg.roi_levels);
  return levels;
}

ag::Var pool(const CascadeConfig& cfg, const FeaturePyramid& pyr, std::span<const Box> boxes,
             int size) {
  std::vector<double> strides;
  const auto levels = roi_feature_levels(cfg, pyr, strides);
  const std::vector<double> flat = flatten(boxes);
  const std::vector<int> lvl = roi_levels(cfg, boxes);
  const kernels::RoiAlignParams p{size, size, cfg.sampling_ratio, 1.0, true};
  return ag::roi_align_levels(levels, strides, flat, lvl, p);
}

void check_finite(const ag::Var& v, const char* name) {
  const double x = v.value()[0];
  if (!std::isfinite(x)) throw NumericError(name, std::string(name) + " is " + std::to_string(x));
}

bool non_empty(const Box& b) { return b.width() > 1e-3 && b.height() > 1e-3; }

std::vector<double> softmax_rows(const Tensor& logits) {
  const int rows = logits.dim(0), cols = logits.dim(1);
  std::vector<double> p(logits.numel());
  for (int r = 0; r < rows; ++r) {
    const double* z = logits.data() + static_cast<std::size_t>(r) * cols;
    const double mx = *std::max_element(z, z + cols);
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += (p[r * cols + c] = std::exp(z[c] - mx));
    for (int c = 0; c < cols; ++c) p[r * cols + c] /= s;
  }
  return p;
}

std::vector<Deltas> delta_rows(const Tensor& t) {
  std::vector<Deltas> d(t.dim(0));
  for (int r = 0; r < t.dim(0); ++r) d[r] = {t.at(r, 0), t.at(r, 1), t.at(r, 2), t.at(r, 3)};
  return d;
}

}  // namespace

void CascadeConfig::validate() const {
  if (num_classes < 1) throw ConfigError("heads: num_classes must be >= 1");
  if (anchor_sizes.size() != 5) throw ConfigError("heads: need one anchor size per pyramid level (5)");
  if (aspect_ratios.empty()) throw ConfigError("heads: aspect_ratios must not be empty");
  for (double r : aspect_ratios)
    if (!(r > 0)) throw ConfigError("heads: aspect ratios must be positive");
  if (num_stages() != 3) throw ConfigError("heads: the cascade has exactly three stages");
  for (int s = 0; s < num_stages(); ++s) {
    const double t = stage_iou_thresholds[s];
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("heads: stage IoU thresholds must lie in (0, 1)");
    if (s > 0 && !(t > stage_iou_thresholds[s - 1])) {
      throw ConfigError("heads: stage IoU thresholds must be strictly increasing");
    }
  }
  if (stage_loss_weights.size() != stage_iou_thresholds.size() ||
      stage_box_weights.size() != stage_iou_thresholds.size()) {
    throw ConfigError("heads: one loss weight and one box-coder weight set per stage");
  }
  if (!(rpn_iou_low > 0 && rpn_iou_low <= rpn_iou_high && rpn_iou_high < 1)) {
    throw ConfigError("heads: need 0 < rpn_iou_low <= rpn_iou_high < 1");
  }
  if (rpn_batch < 1 || roi_batch < 1 || pre_nms_topk < 1 || post_nms_topk < 1) {
    throw ConfigError("heads: batch and top-k sizes must be >= 1");
  }
  if (!(rpn_positive_fraction > 0 && rpn_positive_fraction <= 1 && roi_positive_fraction > 0 &&
        roi_positive_fraction <= 1)) {
    throw ConfigError("heads: positive fractions must lie in (0, 1]");
  }
  if (box_pool < 1 || mask_pool < 1 || box_fc_dim < 1 || mask_conv_dim < 1 || mask_num_convs < 0) {
    throw ConfigError("heads: head sizes must be positive");
  }
  if (roi_levels < 1 || roi_levels > 5 || canonical_level < 0 || canonical_level >= roi_levels) {
    throw ConfigError("heads: need 0 <= canonical_level < roi_levels <= 5");
  }
  if (!(canonical_box_size > 0)) throw ConfigError("heads: canonical_box_size must be positive");
  if (!(score_threshold >= 0 && score_threshold < 1)) {
    throw ConfigError("heads: score_threshold must lie in [0, 1)");
  }
  if (!(nms_threshold > 0 && nms_threshold <= 1 && rpn_nms_threshold > 0 && rpn_nms_threshold <= 1)) {
    throw ConfigError("heads: NMS thresholds must lie in (0, 1]");
  }
  if (max_detections < 1) throw ConfigError("heads: max_detections must be >= 1");
}

void init_head_params(ParamStore& p, const CascadeConfig& cfg, int c, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0xE0));
  const int a = cfg.anchors_per_cell();
  p.add("rpn.conv.weight", init::normal({c, c * 9}, 0.01, rng), true);
  p.add("rpn.conv.bias", Tensor({c}), false);
  p.add("rpn.objectness.weight", init::normal({a, c}, 0.01, rng), true);
  p.add("rpn.objectness.bias", Tensor({a}), false);
  p.add("rpn.deltas.weight", init::normal({4 * a, c}, 0.01, rng), true);
  p.add("rpn.deltas.bias", Tensor({4 * a}), false);

  const int in = c * cfg.box_pool * cfg.box_pool, f = cfg.box_fc_dim, k = cfg.num_classes;
  for (int s = 0; s < cfg.num_stages(); ++s) {
    p.add(stage_name(s, "fc1.weight"), init::trunc_normal({in, f}, std::sqrt(1.0 / in), rng), true);
    p.add(stage_name(s, "fc1.bias"), Tensor({f}), false);
    p.add(stage_name(s, "fc2.weight"), init::trunc_normal({f, f}, std::sqrt(1.0 / f), rng), true);
    p.add(stage_name(s, "fc2.bias"), Tensor({f}), false);
    p.add(stage_name(s, "cls.weight"), init::normal({f, k + 1}, 0.01, rng), true);
    p.add(stage_name(s, "cls.bias"), Tensor({k + 1}), false);
    p.add(stage_name(s, "box.weight"), init::normal({f, 4}, 0.001, rng), true);
    p.add(stage_name(s, "box.bias"), Tensor({4}), false);
  }

  const int m = cfg.mask_conv_dim;
  int cin = c;
  for (int i = 0; i < cfg.mask_num_convs; ++i) {
    const std::string base = "mask.conv" + std::to_string(i);
    p.add(base + ".weight", init::kaiming_fan_out({m, cin * 9}, m * 9, rng), true);
    p.add(base + ".bias", Tensor({m}), false);
    cin = m;
  }
  p.add("mask.deconv.weight", init::kaiming_fan_out({cin, m * 4}, m * 4, rng), true);
  p.add("mask.deconv.bias", Tensor({m}), false);
  p.add("mask.predictor.weight", init::normal({k, m}, 0.001, rng), true);
  p.add("mask.predictor.bias", Tensor({k}), false);
}

RpnOutput rpn_forward(const ParamStore& p, const CascadeConfig& cfg, const FeaturePyramid& pyr) {
  if (pyr.levels.size() != cfg.anchor_sizes.size()) {
    throw DimensionError("rpn: pyramid has " + std::to_string(pyr.levels.size()) +
                         " levels but " + std::to_string(cfg.anchor_sizes.size()) +
                         " anchor sizes are configured");
  }
  const int a = cfg.anchors_per_cell();
  RpnOutput out;
  std::vector<ag::Var> objs, dels;
  for (std::size_t l = 0; l < pyr.levels.size(); ++l) {
    const ag::Var& f = pyr.levels[l];
    const int h = f.dim(1), w = f.dim(2);
    ag::Var t = ag::relu(ag::conv2d(f, p.get("rpn.conv.weight"), p.get("rpn.conv.bias"), 3, 1, 1));
    ag::Var o = ag::conv2d(t, p.get("rpn.objectness.weight"), p.get("rpn.objectness.bias"), 1, 1, 0);
    ag::Var d = ag::conv2d(t, p.get("rpn.deltas.weight"), p.get("rpn.deltas.bias"), 1, 1, 0);
    objs.push_back(ag::reshape(ag::permute(o, {1, 2, 0}), {h * w * a}));
    dels.push_back(ag::reshape(ag::permute(ag::reshape(d, {a, 4, h, w}), {2, 3, 0, 1}), {h * w * a, 4}));
    const auto anchors = generate_anchors(h, w, pyr.strides[l], cfg.anchor_sizes[l], cfg.aspect_ratios);
    out.anchors.insert(out.anchors.end(), anchors.begin(), anchors.end());
    out.level_of_anchor.insert(out.level_of_anchor.end(), anchors.size(), static_cast<int>(l));
  }
  out.objectness = objs.size() == 1 ? objs[0] : ag::concat0(objs);
  out.deltas = dels.size() == 1 ? dels[0] : ag::concat0(dels);
  return out;
}

std::vector<Proposal> generate_proposals(const CascadeConfig& cfg, const RpnOutput& rpn,
                                         double img_h, double img_w) {
  const Tensor& obj = rpn.objectness.value();
  const Tensor& del = rpn.deltas.value();
  const BoxCoderWeights unit{};
  std::vector<Box> boxes;
  std::vector<double> scores;
  std::vector<int> levels;
  std::size_t begin = 0;
  while (begin < rpn.anchors.size()) {
    const int lvl = rpn.level_of_anchor[begin];
    std::size_t end = begin;
    while (end < rpn.anchors.size() && rpn.level_of_anchor[end] == lvl) ++end;
    std::vector<int> order(end - begin);
    std::iota(order.begin(), order.end(), static_cast<int>(begin));
    const std::size_t k = std::min<std::size_t>(order.size(), cfg.pre_nms_topk);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int x, int y) {
      return obj[x] > obj[y] || (obj[x] == obj[y] && x < y);
    });
    for (std::size_t i = 0; i < k; ++i) {
      const int idx = order[i];
      const Deltas d{del.at(idx, 0), del.at(idx, 1), del.at(idx, 2), del.at(idx, 3)};
      const Box b = clip_box(decode_box(rpn.anchors[idx], d, unit), img_h, img_w);
      if (!std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) || !std::isfinite(b.y2)) {
        continue;
      }
      if (b.width() < cfg.min_proposal_size || b.height() < cfg.min_proposal_size) continue;
      boxes.push_back(b);
      scores.push_back(obj[idx]);
      levels.push_back(lvl);
    }
    begin = end;
  }
  std::vector<int> keep = batched_nms(boxes, scores, levels, cfg.rpn_nms_threshold);
  if (static_cast<int>(keep.size()) > cfg.post_nms_topk) keep.resize(cfg.post_nms_topk);
  std::vector<Proposal> out;
  for (int i : keep) out.push_back({boxes[i], scores[i], levels[i]});
  return out;
}

std::vector<int> roi_levels(const CascadeConfig& cfg, std::span<const Box> boxes) {
  std::vector<int> out(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const double side = std::sqrt(std::max(boxes[i].area(), 1e-12));
    const int l = static_cast<int>(
        std::floor(cfg.canonical_level + std::log2(side / cfg.canonical_box_size + 1e-8)));
    out[i] = std::clamp(l, 0, cfg.roi_levels - 1);
  }
  return out;
}

BoxHeadOutput box_head_forward(const ParamStore& p, const CascadeConfig& cfg, int s,
                               const FeaturePyramid& pyr, std::span<const Box> boxes) {
  if (boxes.empty()) throw DimensionError("box head: no boxes");
  const int r = static_cast<int>(boxes.size());
  ag::Var x = pool(cfg, pyr, boxes, cfg.box_pool);
  x = ag::reshape(x, {r, static_cast<int>(x.numel() / r)});
  x = ag::relu(ag::linear(x, p.get(stage_name(s, "fc1.weight")), p.get(stage_name(s, "fc1.bias"))));
  x = ag::relu(ag::linear(x, p.get(stage_name(s, "fc2.weight")), p.get(stage_name(s, "fc2.bias"))));
  return {ag::linear(x, p.get(stage_name(s, "cls.weight")), p.get(stage_name(s, "cls.bias"))),
          ag::linear(x, p.get(stage_name(s, "box.weight")), p.get(stage_name(s, "box.bias")))};
}

ag::Var mask_head_forward(const ParamStore& p, const CascadeConfig& cfg, const FeaturePyramid& pyr,
                          std::span<const Box> boxes) {
  if (boxes.empty()) throw DimensionError("mask head: no boxes");
  ag::Var x = pool(cfg, pyr, boxes, cfg.mask_pool);
  for (int i = 0; i < cfg.mask_num_convs; ++i) {
    const std::string base = "mask.conv" + std::to_string(i);
    x = ag::relu(ag::conv2d(x, p.get(base + ".weight"), p.get(base + ".bias"), 3, 1, 1));
  }
  x = ag::relu(ag::conv_transpose2x2(x, p.get("mask.deconv.weight"), p.get("mask.deconv.bias")));
  return ag::conv2d(x, p.get("mask.predictor.weight"), p.get("mask.predictor.bias"), 1, 1, 0);
}

std::vector<double> mask_target(const BinaryMask& mask, const Box& box, int size) {
  Tensor f({1, mask.height, mask.width});
  for (std::size_t i = 0; i < mask.data.size(); ++i) f[i] = mask.data[i];
  const std::vector<double> b = {box.x1, box.y1, box.x2, box.y2};
  const kernels::RoiAlignParams p{size, size, 0, 1.0, true};
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  kernels::ref::roi_align_forward(f.data(), 1, mask.height, mask.width, b, p, out.data());
  for (double& v : out) v = v >= 0.5 ? 1.0 : 0.0;
  return out;
}

std::map<std::string, double> LossTerms::values() const {
  std::map<std::string, double> m;
  m["loss_rpn_cls"] = rpn_cls.value()[0];
  m["loss_rpn_box"] = rpn_box.value()[0];
  for (std::size_t s = 0; s < stage_cls.size(); ++s) {
    m["loss_stage" + std::to_string(s + 1) + "_cls"] = stage_cls[s].value()[0];
    m["loss_stage" + std::to_string(s + 1) + "_box"] = stage_box[s].value()[0];
  }
  m["loss_mask"] = mask.value()[0];
  m["loss_total"] = total.value()[0];
  return m;
}

LossTerms compute_losses(const ParamStore& p, const CascadeConfig& cfg, const FeaturePyramid& pyr,
                         const GroundTruth& gt, double img_h, double img_w, Rng& rng,
                         ImagePlan& plan, bool replay) {
  const int k = cfg.num_classes;
  const int stages = cfg.num_stages();
  LossTerms L;

  // RPN.
  const RpnOutput rpn = rpn_forward(p, cfg, pyr);
  const int na = static_cast<int>(rpn.anchors.size());
  if (!replay) {
    plan = ImagePlan{};
    const Assignment a = assign_anchors(rpn.anchors, gt.boxes, cfg.rpn_iou_low, cfg.rpn_iou_high);
    plan.rpn_sampled = sample_labels(a.label, cfg.rpn_batch, cfg.rpn_positive_fraction, rng);
    for (int i : plan.rpn_sampled) {
      plan.rpn_labels.push_back(a.label[i]);
      plan.rpn_matched.push_back(a.label[i] == 1 ? a.matched_gt[i] : -1);
    }
  }
  {
    Tensor targets({na}), weights({na}), box_t({na, 4}), box_w({na});
    for (std::size_t j = 0; j < plan.rpn_sampled.size(); ++j) {
      const int i = plan.rpn_sampled[j];
      weights[i] = 1.0;
      targets[i] = plan.rpn_labels[j];
      if (plan.rpn_labels[j] == 1) {
        const Deltas d = encode_box(rpn.anchors[i], gt.boxes[plan.rpn_matched[j]], BoxCoderWeights{});
        for (int c = 0; c < 4; ++c) box_t.at(i, c) = d[c];
        box_w[i] = 1.0;
      }
    }
    L.rpn_cls = ag::bce_with_logits(rpn.objectness, targets, weights, cfg.rpn_batch);
    L.rpn_box = ag::smooth_l1(rpn.deltas, box_t, box_w, cfg.rpn_smooth_l1_beta, cfg.rpn_batch);
  }

  // Stage-1 RoIs: proposals plus the GT boxes, sampled.
  if (!replay) {
    std::vector<Box> cands;
    for (const Proposal& pr : generate_proposals(cfg, rpn, img_h, img_w)) cands.push_back(pr.box);
    cands.insert(cands.end(), gt.boxes.begin(), gt.boxes.end());
    const Assignment a = assign_targets(cands, gt.boxes, cfg.stage_iou_thresholds[0]);
    StagePlan sp;
    for (int i : sample_labels(a.label, cfg.roi_batch, cfg.roi_positive_fraction, rng)) {
      sp.boxes.push_back(cands[i]);
      sp.matched.push_back(a.label[i] == 1 ? a.matched_gt[i] : -1);
      sp.labels.push_back(a.label[i] == 1 ? gt.classes[a.matched_gt[i]] : k);
    }
    plan.stages.assign(1, std::move(sp));
  }
  if (static_cast<int>(plan.stages.size()) > stages) throw DimensionError("plan has too many stages");

  for (int s = 0; s < stages; ++s) {
    if (s >= static_cast<int>(plan.stages.size()) || plan.stages[s].boxes.empty()) {
      L.stage_cls.push_back(zero_loss());
      L.stage_box.push_back(zero_loss());
      if (!replay && s + 1 < stages) plan.stages.emplace_back();
      continue;
    }
    const StagePlan& sp = plan.stages[s];
    const int r = static_cast<int>(sp.boxes.size());
    const BoxHeadOutput out = box_head_forward(p, cfg, s, pyr, sp.boxes);
    L.stage_cls.push_back(ag::softmax_cross_entropy(out.class_logits, sp.labels, r));
    Tensor box_t({r, 4}), box_w({r});
    for (int i = 0; i < r; ++i) {
      if (sp.matched[i] < 0) continue;
      const Deltas d = encode_box(sp.boxes[i], gt.boxes[sp.matched[i]], cfg.stage_box_weights[s]);
      for (int c = 0; c < 4; ++c) box_t.at(i, c) = d[c];
      box_w[i] = 1.0;
    }
    L.stage_box.push_back(ag::smooth_l1(out.deltas, box_t, box_w, cfg.roi_smooth_l1_beta, r));
    if (!replay && s + 1 < stages) {
      const auto refined = decode_boxes(sp.boxes, delta_rows(out.deltas.value()),
                                        cfg.stage_box_weights[s], img_h, img_w);
      std::vector<Box> kept;
      for (const Box& b : refined)
        if (non_empty(b)) kept.push_back(b);
      const Assignment a = assign_targets(kept, gt.boxes, cfg.stage_iou_thresholds[s + 1]);
      StagePlan next;
      next.boxes = kept;
      for (std::size_t i = 0; i < kept.size(); ++i) {
        next.matched.push_back(a.label[i] == 1 ? a.matched_gt[i] : -1);
        next.labels.push_back(a.label[i] == 1 ? gt.classes[a.matched_gt[i]] : k);
      }
      plan.stages.push_back(std::move(next));
    }
  }

  // Mask loss on the last stage's positives.
  if (!replay) {
    plan.mask_rows.clear();
    if (static_cast<int>(plan.stages.size()) == stages) {
      const StagePlan& last = plan.stages.back();
      for (std::size_t i = 0; i < last.boxes.size(); ++i)
        if (last.matched[i] >= 0) plan.mask_rows.push_back(static_cast<int>(i));
    }
  }
  if (plan.mask_rows.empty()) {
    L.mask = zero_loss();
  } else {
    const StagePlan& last = plan.stages.back();
    const int m = static_cast<int>(plan.mask_rows.size());
    const int ms = cfg.mask_size();
    std::vector<Box> boxes;
    std::vector<int> cls;
    Tensor targets({m, ms, ms}), weights({m, ms, ms}, 1.0);
    for (int j = 0; j < m; ++j) {
      const int row = plan.mask_rows[j];
      boxes.push_back(last.boxes[row]);
      cls.push_back(last.labels[row]);
      const auto t = mask_target(gt.masks[last.matched[row]], last.boxes[row], ms);
      std::copy(t.begin(), t.end(), targets.data() + static_cast<std::size_t>(j) * ms * ms);
    }
    const ag::Var logits = ag::select_channel(mask_head_forward(p, cfg, pyr, boxes), cls);
    L.mask = ag::bce_with_logits(logits, targets, weights, static_cast<double>(m) * ms * ms);
  }

  std::vector<ag::Var> terms = {L.rpn_cls, L.rpn_box};
  std::vector<double> w = {1.0, 1.0};
  for (int s = 0; s < stages; ++s) {
    terms.push_back(L.stage_cls[s]);
    terms.push_back(L.stage_box[s]);
    w.push_back(cfg.stage_loss_weights[s]);
    w.push_back(cfg.stage_loss_weights[s]);
  }
  terms.push_back(L.mask);
  w.push_back(1.0);
  L.total = ag::weighted_sum(terms, w);

  check_finite(L.rpn_cls, "loss_rpn_cls");
  check_finite(L.rpn_box, "loss_rpn_box");
  static const char* kCls[] = {"loss_stage1_cls", "loss_stage2_cls", "loss_stage3_cls"};
  static const char* kBox[] = {"loss_stage1_box", "loss_stage2_box", "loss_stage3_box"};
  for (int s = 0; s < stages; ++s) {
    check_finite(L.stage_cls[s], kCls[s]);
    check_finite(L.stage_box[s], kBox[s]);
  }
  check_finite(L.mask, "loss_mask");
  check_finite(L.total, "loss_total");
  return L;
}

CascadeOutput cascade_forward(const ParamStore& p, const CascadeConfig& cfg, const FeaturePyramid& pyr,
                              std::span<const Proposal> proposals, double img_h, double img_w) {
  CascadeOutput out;
  if (proposals.empty()) return out;
  ag::NoGradGuard ng;
  std::vector<Box> boxes;
  for (const Proposal& pr : proposals) boxes.push_back(pr.box);
  const int r = static_cast<int>(boxes.size());
  const int c = cfg.num_classes + 1;
  out.scores.assign(static_cast<std::size_t>(r) * c, 0.0);
  for (int s = 0; s < cfg.num_stages(); ++s) {
    out.stage_inputs.push_back(boxes);
    const BoxHeadOutput h = box_head_forward(p, cfg, s, pyr, boxes);
    out.stage_probs.push_back(softmax_rows(h.class_logits.value()));
    boxes = decode_boxes(boxes, delta_rows(h.deltas.value()), cfg.stage_box_weights[s], img_h, img_w);
    // Degenerate boxes would make the next stage's level assignment meaningless.
    for (Box& b : boxes) {
      if (b.width() < 1e-3) b.x2 = std::min(img_w, b.x1 + 1e-3);
      if (b.height() < 1e-3) b.y2 = std::min(img_h, b.y1 + 1e-3);
    }
  }
  out.final_boxes = boxes;
  for (const auto& pr : out.stage_probs)
    for (std::size_t i = 0; i < pr.size(); ++i) out.scores[i] += pr[i] / cfg.num_stages();
  return out;
}

BinaryMask paste_mask(const std::vector<double>& probs, int size, const Box& box, int height,
                      int width, double threshold) {
  BinaryMask m(height, width);
  const double bw = box.width(), bh = box.height();
  if (!(bw > 0.0) || !(bh > 0.0)) return m;
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y1)));
  const int x1 = std::min(width, static_cast<int>(std::ceil(box.x2)));
  const int y1 = std::min(height, static_cast<int>(std::ceil(box.y2)));
  auto at = [&](int yy, int xx) { return probs[static_cast<std::size_t>(yy) * size + xx]; };
  for (int y = y0; y < y1; ++y) {
    const double cy = y + 0.5;
    if (cy < box.y1 || cy > box.y2) continue;
    const double sy = std::clamp((cy - box.y1) / bh * size - 0.5, 0.0, size - 1.0);
    const int iy = static_cast<int>(sy), iy1 = std::min(iy + 1, size - 1);
    const double fy = sy - iy;
    for (int x = x0; x < x1; ++x) {
      const double cx = x + 0.5;
      if (cx < box.x1 || cx > box.x2) continue;
      const double sx = std::clamp((cx - box.x1) / bw * size - 0.5, 0.0, size - 1.0);
      const int ix = static_cast<int>(sx), ix1 = std::min(ix + 1, size - 1);
      const double fx = sx - ix;
      const double v = (1 - fy) * ((1 - fx) * at(iy, ix) + fx * at(iy, ix1)) +
                       fy * ((1 - fx) * at(iy1, ix) + fx * at(iy1, ix1));
      if (v >= threshold) m.at(y, x) = 1;
    }
  }
  return m;
}

std::vector<Detection> postprocess(const ParamStore& p, const CascadeConfig& cfg,
                                   const FeaturePyramid& pyr, const CascadeOutput& out, int out_h,
                                   int out_w, double box_scale) {
  std::vector<Detection> dets;
  if (out.final_boxes.empty()) return dets;
  const int k = cfg.num_classes;
  std::vector<Box> cand_boxes;
  std::vector<double> cand_scores;
  std::vector<int> cand_labels, cand_rows;
  for (std::size_t r = 0; r < out.final_boxes.size(); ++r) {
    const Box& b = out.final_boxes[r];
    if (!(b.width() > 0.0 && b.height() > 0.0)) continue;
    for (int c = 0; c < k; ++c) {
      const double s = out.scores[r * (k + 1) + c];
      if (s > cfg.score_threshold) {
        cand_boxes.push_back(b);
        cand_scores.push_back(s);
        cand_labels.push_back(c);
        cand_rows.push_back(static_cast<int>(r));
      }
    }
  }
  std::vector<int> keep = batched_nms(cand_boxes, cand_scores, cand_labels, cfg.nms_threshold);
  if (static_cast<int>(keep.size()) > cfg.max_detections) keep.resize(cfg.max_detections);
  if (keep.empty()) return dets;

  std::vector<Box> boxes;
  std::vector<int> labels;
  for (int i : keep) {
    boxes.push_back(cand_boxes[i]);
    labels.push_back(cand_labels[i]);
  }
  ag::NoGradGuard ng;
  const ag::Var logits = ag::select_channel(mask_head_forward(p, cfg, pyr, boxes), labels);
  const int ms = cfg.mask_size();
  for (std::size_t j = 0; j < keep.size(); ++j) {
    Detection d;
    d.box = clip_box({boxes[j].x1 * box_scale, boxes[j].y1 * box_scale, boxes[j].x2 * box_scale,
                      boxes[j].y2 * box_scale},
                     out_h, out_w);
    d.label = labels[j];
    d.score = std::clamp(cand_scores[keep[j]], 0.0, 1.0);
    std::vector<double> probs(static_cast<std::size_t>(ms) * ms);
    for (std::size_t q = 0; q < probs.size(); ++q)
      probs[q] = 1.0 / (1.0 + std::exp(-logits.value()[j * probs.size() + q]));
    d.mask = paste_mask(probs, ms, d.box, out_h, out_w, cfg.mask_threshold);
    dets.push_back(std::move(d));
  }
  return dets;
}

}  // namespace plainseg
