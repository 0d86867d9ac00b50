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

#include "plainseg/detector.hpp"

#include <cmath>

#include "plainseg/error.hpp"

namespace plainseg {

void ModelConfig::validate() const {
  backbone.validate();
  heads.validate();
  if (heads.mask_conv_dim < 1) throw ConfigError("model: mask_conv_dim must be positive");
}

ParamStore build_model_params(const ModelConfig& cfg) {
  cfg.validate();
  ParamStore p;
  init_backbone_params(p, cfg.backbone);
  init_head_params(p, cfg.heads, cfg.backbone.pyramid_channels, cfg.backbone.seed);
  return p;
}

ParamStore clone_params(const ParamStore& params) {
  ParamStore out;
  for (const auto& e : params.entries()) out.add(e.name, e.var.value(), e.decay);
  return out;
}

int CategoryMap::index_of(int category_id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == category_id) return static_cast<int>(i);
  throw DanglingReferenceError("unknown category id " + std::to_string(category_id));
}

CategoryMap make_category_map(const std::vector<CategoryDef>& categories) {
  CategoryMap m;
  for (const auto& c : categories) {
    m.ids.push_back(c.id);
    m.rare.push_back(c.is_rare);
  }
  return m;
}

GroundTruth ground_truth_from(const std::vector<InstanceAnnotation>& anns, const CategoryMap& cats) {
  GroundTruth gt;
  for (const auto& a : anns) {
    if (a.iscrowd) continue;
    gt.boxes.push_back(to_corners(a.bbox));
    gt.classes.push_back(cats.index_of(a.category_id));
    gt.masks.push_back(rle_decode(a.mask));
  }
  return gt;
}

LossTerms model_losses(const ParamStore& params, const ModelConfig& cfg, const Image& image,
                       const GroundTruth& gt, Rng& rng, ImagePlan& plan, bool replay) {
  const ag::Var x(image_to_tensor(image));
  const FeaturePyramid pyr = build_pyramid(params, cfg.backbone, backbone_forward(params, cfg.backbone, x));
  return compute_losses(params, cfg.heads, pyr, gt, image.height, image.width, rng, plan, replay);
}

std::vector<Detection> predict(const ParamStore& params, const ModelConfig& cfg, const Image& image,
                               InferenceTrace* trace) {
  if (image.height <= 0 || image.width <= 0) throw DataError("predict: empty image");
  ag::NoGradGuard ng;
  const int size = cfg.backbone.img_size;
  const double scale = static_cast<double>(size) / std::max(image.height, image.width);
  const auto [nh, nw] = scaled_size(image.height, image.width, scale);
  Image canvas(size, size, 3, 0);
  const Image rgb = image.channels == 3 ? image : [&] {
    Image c(image.height, image.width, 3);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        for (int k = 0; k < 3; ++k) c.px(y, x)[k] = image.px(y, x)[std::min(k, image.channels - 1)];
    return c;
  }();
  const Image scaled = (nh == rgb.height && nw == rgb.width) ? rgb : resize_bilinear(rgb, nh, nw);
  for (int y = 0; y < std::min(nh, size); ++y)
    std::copy(scaled.px(y, 0), scaled.px(y, 0) + static_cast<std::size_t>(std::min(nw, size)) * 3,
              canvas.px(y, 0));

  const ag::Var x(image_to_tensor(canvas));
  const FeaturePyramid pyr = build_pyramid(params, cfg.backbone, backbone_forward(params, cfg.backbone, x));
  const RpnOutput rpn = rpn_forward(params, cfg.heads, pyr);
  // Proposals stay inside the content region.
  const std::vector<Proposal> props = generate_proposals(cfg.heads, rpn, std::min(nh, size), std::min(nw, size));
  CascadeOutput out = cascade_forward(params, cfg.heads, pyr, props, std::min(nh, size), std::min(nw, size));
  auto dets = postprocess(params, cfg.heads, pyr, out, image.height, image.width, 1.0 / scale);
  if (trace) {
    trace->proposals = props;
    trace->cascade = std::move(out);
    trace->scale = scale;
  }
  return dets;
}

std::vector<DetectionResult> to_results(const std::vector<Detection>& dets, std::int64_t image_id,
                                        const CategoryMap& cats) {
  std::vector<DetectionResult> out;
  for (const auto& d : dets) {
    DetectionResult r;
    r.image_id = image_id;
    r.category_id = cats.ids.at(d.label);
    r.bbox = to_xywh(d.box);
    r.score = d.score;
    r.mask = rle_encode(d.mask);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DetectionResult> predict_dataset(const ParamStore& params, const ModelConfig& cfg,
                                             const DatasetManifest& manifest,
                                             const std::vector<Image>& images) {
  if (images.size() != manifest.images.size()) throw DataError("predict: image count does not match the manifest");
  const CategoryMap cats = make_category_map(manifest.categories);
  std::vector<DetectionResult> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto r = to_results(predict(params, cfg, images[i]), manifest.images[i].id, cats);
    out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  }
  return out;
}

}  // namespace plainseg
