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

#include "plainseg/config.hpp"

#include <cstdlib>
#include <set>

#include "json.hpp"
#include "plainseg/error.hpp"

namespace plainseg {

using json = nlohmann::ordered_json;

void RunConfig::validate() const {
  if (name.empty()) throw ConfigError("name must not be empty");
  data.validate();
  augment.validate();
  model.validate();
  optimizer.validate();
  schedule.validate();
  eval.validate();
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("ema.decay must lie in [0, 1]");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (augment.crop_size != model.backbone.img_size)
    throw ConfigError("augment.crop_size (" + std::to_string(augment.crop_size) +
                      ") must equal backbone.img_size (" + std::to_string(model.backbone.img_size) + ")");
  if (model.heads.num_classes != 5)
    throw ConfigError("heads.num_classes must be 5 for the synthetic shapes dataset");
}

void RunConfig::propagate_seed() {
  data.seed = seed;
  augment.seed = seed;
  model.backbone.seed = seed;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json box_weights_json(const std::vector<BoxCoderWeights>& w) {
  json a = json::array();
  for (const auto& b : w) a.push_back({b.wx, b.wy, b.ww, b.wh});
  return a;
}

const char* iou_kind_name(IouKind k) { return k == IouKind::kMask ? "mask" : "box"; }

}  // namespace

std::string config_to_json(const RunConfig& c) {
  json j;
  j["name"] = c.name;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["data"] = {{"num_images", c.data.num_images},
               {"image_size", c.data.image_size},
               {"category_weights", c.data.category_weights},
               {"rare_fraction_target", c.data.rare_fraction_target},
               {"min_shapes", c.data.min_shapes},
               {"max_shapes", c.data.max_shapes},
               {"min_shape_size", c.data.min_shape_size},
               {"max_shape_size", c.data.max_shape_size}};
  j["augment"] = {{"scale_min", c.augment.scale_min},
                  {"scale_max", c.augment.scale_max},
                  {"crop_size", c.augment.crop_size},
                  {"pad_value", c.augment.pad_value}};
  const BackboneConfig& b = c.model.backbone;
  j["backbone"] = {{"img_size", b.img_size},
                   {"patch_size", b.patch_size},
                   {"embed_dim", b.embed_dim},
                   {"depth", b.depth},
                   {"num_heads", b.num_heads},
                   {"mlp_ratio", b.mlp_ratio},
                   {"window_size", b.window_size},
                   {"global_block_indices", b.global_block_indices},
                   {"pyramid_channels", b.pyramid_channels}};
  const CascadeConfig& h = c.model.heads;
  j["heads"] = {{"num_classes", h.num_classes},
                {"anchor_sizes", h.anchor_sizes},
                {"aspect_ratios", h.aspect_ratios},
                {"rpn_iou_low", h.rpn_iou_low},
                {"rpn_iou_high", h.rpn_iou_high},
                {"rpn_batch", h.rpn_batch},
                {"rpn_positive_fraction", h.rpn_positive_fraction},
                {"rpn_smooth_l1_beta", h.rpn_smooth_l1_beta},
                {"pre_nms_topk", h.pre_nms_topk},
                {"post_nms_topk", h.post_nms_topk},
                {"rpn_nms_threshold", h.rpn_nms_threshold},
                {"min_proposal_size", h.min_proposal_size},
                {"roi_batch", h.roi_batch},
                {"roi_positive_fraction", h.roi_positive_fraction},
                {"roi_smooth_l1_beta", h.roi_smooth_l1_beta},
                {"stage_iou_thresholds", h.stage_iou_thresholds},
                {"stage_loss_weights", h.stage_loss_weights},
                {"stage_box_weights", box_weights_json(h.stage_box_weights)},
                {"box_pool", h.box_pool},
                {"mask_pool", h.mask_pool},
                {"sampling_ratio", h.sampling_ratio},
                {"box_fc_dim", h.box_fc_dim},
                {"mask_conv_dim", h.mask_conv_dim},
                {"mask_num_convs", h.mask_num_convs},
                {"canonical_box_size", h.canonical_box_size},
                {"canonical_level", h.canonical_level},
                {"roi_levels", h.roi_levels},
                {"score_threshold", h.score_threshold},
                {"nms_threshold", h.nms_threshold},
                {"max_detections", h.max_detections},
                {"mask_threshold", h.mask_threshold}};
  j["optimizer"] = {{"base_lr", c.optimizer.base_lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"batch_size", c.optimizer.batch_size},
                    {"grad_clip_norm", c.optimizer.grad_clip_norm}};
  j["schedule"] = {{"total_steps", c.schedule.total_steps},
                   {"warmup_fraction", c.schedule.warmup_fraction},
                   {"warmup_init_factor", c.schedule.warmup_init_factor}};
  j["ema"] = {{"decay", c.ema_decay}};
  j["train"] = {{"checkpoint_every", c.checkpoint_every}};
  j["eval"] = {{"iou_thresholds", c.eval.iou_thresholds},
               {"max_dets_per_image", c.eval.max_dets_per_image},
               {"iou_kind", iou_kind_name(c.eval.iou_kind)},
               {"recall_points", c.eval.recall_points}};
  return j.dump(2);
}

namespace {

// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key " + (path_.empty() ? k : path_ + "." + k));
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key " + key_path(key) + " has the wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string key_path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig config_from_json(const std::string& text, const RunConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = base;
  Section root(j, "");
  root.get("name", c.name);
  root.get("out_dir", c.out_dir);
  root.get("seed", c.seed);
  if (const json* s = root.sub("data")) {
    Section d(*s, "data");
    d.get("num_images", c.data.num_images);
    d.get("image_size", c.data.image_size);
    d.get("category_weights", c.data.category_weights);
    d.get("rare_fraction_target", c.data.rare_fraction_target);
    d.get("min_shapes", c.data.min_shapes);
    d.get("max_shapes", c.data.max_shapes);
    d.get("min_shape_size", c.data.min_shape_size);
    d.get("max_shape_size", c.data.max_shape_size);
  }
  if (const json* s = root.sub("augment")) {
    Section a(*s, "augment");
    a.get("scale_min", c.augment.scale_min);
    a.get("scale_max", c.augment.scale_max);
    a.get("crop_size", c.augment.crop_size);
    a.get("pad_value", c.augment.pad_value);
  }
  if (const json* s = root.sub("backbone")) {
    Section b(*s, "backbone");
    BackboneConfig& m = c.model.backbone;
    b.get("img_size", m.img_size);
    b.get("patch_size", m.patch_size);
    b.get("embed_dim", m.embed_dim);
    b.get("depth", m.depth);
    b.get("num_heads", m.num_heads);
    b.get("mlp_ratio", m.mlp_ratio);
    b.get("window_size", m.window_size);
    b.get("global_block_indices", m.global_block_indices);
    b.get("pyramid_channels", m.pyramid_channels);
  }
  if (const json* s = root.sub("heads")) {
    Section h(*s, "heads");
    CascadeConfig& m = c.model.heads;
    h.get("num_classes", m.num_classes);
    h.get("anchor_sizes", m.anchor_sizes);
    h.get("aspect_ratios", m.aspect_ratios);
    h.get("rpn_iou_low", m.rpn_iou_low);
    h.get("rpn_iou_high", m.rpn_iou_high);
    h.get("rpn_batch", m.rpn_batch);
    h.get("rpn_positive_fraction", m.rpn_positive_fraction);
    h.get("rpn_smooth_l1_beta", m.rpn_smooth_l1_beta);
    h.get("pre_nms_topk", m.pre_nms_topk);
    h.get("post_nms_topk", m.post_nms_topk);
    h.get("rpn_nms_threshold", m.rpn_nms_threshold);
    h.get("min_proposal_size", m.min_proposal_size);
    h.get("roi_batch", m.roi_batch);
    h.get("roi_positive_fraction", m.roi_positive_fraction);
    h.get("roi_smooth_l1_beta", m.roi_smooth_l1_beta);
    h.get("stage_iou_thresholds", m.stage_iou_thresholds);
    h.get("stage_loss_weights", m.stage_loss_weights);
    std::vector<std::vector<double>> bw;
    h.get("stage_box_weights", bw);
    if (!bw.empty()) {
      m.stage_box_weights.clear();
      for (const auto& w : bw) {
        if (w.size() != 4) throw ConfigError("heads.stage_box_weights entries need 4 values");
        m.stage_box_weights.push_back({w[0], w[1], w[2], w[3]});
      }
    }
    h.get("box_pool", m.box_pool);
    h.get("mask_pool", m.mask_pool);
    h.get("sampling_ratio", m.sampling_ratio);
    h.get("box_fc_dim", m.box_fc_dim);
    h.get("mask_conv_dim", m.mask_conv_dim);
    h.get("mask_num_convs", m.mask_num_convs);
    h.get("canonical_box_size", m.canonical_box_size);
    h.get("canonical_level", m.canonical_level);
    h.get("roi_levels", m.roi_levels);
    h.get("score_threshold", m.score_threshold);
    h.get("nms_threshold", m.nms_threshold);
    h.get("max_detections", m.max_detections);
    h.get("mask_threshold", m.mask_threshold);
  }
  if (const json* s = root.sub("optimizer")) {
    Section o(*s, "optimizer");
    o.get("base_lr", c.optimizer.base_lr);
    o.get("beta1", c.optimizer.beta1);
    o.get("beta2", c.optimizer.beta2);
    o.get("epsilon", c.optimizer.epsilon);
    o.get("weight_decay", c.optimizer.weight_decay);
    o.get("batch_size", c.optimizer.batch_size);
    o.get("grad_clip_norm", c.optimizer.grad_clip_norm);
  }
  if (const json* s = root.sub("schedule")) {
    Section o(*s, "schedule");
    o.get("total_steps", c.schedule.total_steps);
    o.get("warmup_fraction", c.schedule.warmup_fraction);
    o.get("warmup_init_factor", c.schedule.warmup_init_factor);
  }
  if (const json* s = root.sub("ema")) {
    Section o(*s, "ema");
    o.get("decay", c.ema_decay);
  }
  if (const json* s = root.sub("train")) {
    Section o(*s, "train");
    o.get("checkpoint_every", c.checkpoint_every);
  }
  if (const json* s = root.sub("eval")) {
    Section o(*s, "eval");
    o.get("iou_thresholds", c.eval.iou_thresholds);
    o.get("max_dets_per_image", c.eval.max_dets_per_image);
    o.get("recall_points", c.eval.recall_points);
    std::string kind = iou_kind_name(c.eval.iou_kind);
    o.get("iou_kind", kind);
    if (kind == "mask") c.eval.iou_kind = IouKind::kMask;
    else if (kind == "box") c.eval.iou_kind = IouKind::kBox;
    else throw ConfigError("eval.iou_kind must be \"mask\" or \"box\"");
  }
  c.propagate_seed();
  return c;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

RunConfig toy_preset() {
  RunConfig c;
  c.name = "toy";
  c.out_dir = "runs/toy";
  c.data.num_images = 20;
  c.data.image_size = 128;
  c.augment.scale_min = 0.75;
  c.augment.scale_max = 1.25;
  c.augment.crop_size = 128;
  c.model.backbone = BackboneConfig{};
  c.model.heads = CascadeConfig{};
  c.optimizer.base_lr = 1e-3;
  c.optimizer.batch_size = 2;
  c.schedule.total_steps = 2000;
  c.checkpoint_every = 500;
  return c;
}

// Large plain ViT at full resolution with paper-scale heads.
RunConfig paper_preset() {
  RunConfig c;
  c.name = "paper";
  c.out_dir = "runs/paper";
  c.augment.scale_min = 0.1;
  c.augment.scale_max = 2.0;
  c.augment.crop_size = 1920;
  BackboneConfig& b = c.model.backbone;
  b.img_size = 1920;
  b.patch_size = 16;
  b.embed_dim = 1024;
  b.depth = 24;
  b.num_heads = 16;
  b.mlp_ratio = 4.0;
  b.window_size = 16;
  b.global_block_indices = {5, 11, 17, 23};
  b.pyramid_channels = 256;
  CascadeConfig& h = c.model.heads;
  h.anchor_sizes = {32, 64, 128, 256, 512};
  h.rpn_batch = 256;
  h.pre_nms_topk = 2000;
  h.post_nms_topk = 1000;
  h.roi_batch = 512;
  h.box_fc_dim = 1024;
  h.mask_conv_dim = 256;
  h.canonical_box_size = 224.0;
  c.optimizer.base_lr = 4e-5;
  c.optimizer.batch_size = 32;
  c.optimizer.weight_decay = 0.1;
  c.schedule.total_steps = 103000;
  c.schedule.warmup_fraction = 0.01;
  c.schedule.warmup_init_factor = 0.001;
  c.ema_decay = 0.9999;
  c.checkpoint_every = 5000;
  return c;
}

RunConfig validation_run(const char* name, int size, int batch, double lr, std::int64_t steps) {
  RunConfig c = paper_preset();
  c.name = name;
  c.out_dir = std::string("runs/") + name;
  c.augment.crop_size = size;
  c.model.backbone.img_size = size;
  c.optimizer.batch_size = batch;
  c.optimizer.base_lr = lr;
  c.schedule.total_steps = steps;
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"toy", "paper", "val-1536-b8-lr1e-5", "val-1920-b8-lr1e-5", "val-1920-b8-lr4e-5",
          "val-1920-b16-lr4e-5"};
}

RunConfig preset(const std::string& name) {
  if (name == "toy") return toy_preset();
  if (name == "paper") return paper_preset();
  if (name == "val-1536-b8-lr1e-5") return validation_run(name.c_str(), 1536, 8, 1e-5, 35000);
  if (name == "val-1920-b8-lr1e-5") return validation_run(name.c_str(), 1920, 8, 1e-5, 35000);
  if (name == "val-1920-b8-lr4e-5") return validation_run(name.c_str(), 1920, 8, 4e-5, 35000);
  // Warm-started from an 18k-step batch-8 run in the original schedule.
  if (name == "val-1920-b16-lr4e-5") return validation_run(name.c_str(), 1920, 16, 4e-5, 20500);
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset \"" + name + "\" (known: " + known + ")");
}

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(origin + ": seed must be a non-negative integer, got \"" + text + "\"");
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    throw ConfigError(origin + ": seed out of range: " + text);
  }
}

RunConfig resolve_config(const ConfigSources& src) {
  RunConfig c = src.preset ? preset(*src.preset) : RunConfig{};
  if (src.config_path) c = config_from_json(read_text_file(*src.config_path), c);
  if (src.read_env)
    if (const char* env = std::getenv(kSeedEnvVar); env && *env) c.seed = parse_seed(env, kSeedEnvVar);
  if (src.seed) c.seed = *src.seed;
  if (src.out_dir) c.out_dir = *src.out_dir;
  c.propagate_seed();
  c.validate();
  return c;
}

}  // namespace plainseg
