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

#include "plainseg/augmentation.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "json.hpp"
#include "plainseg/error.hpp"

namespace plainseg {

void AugmentConfig::validate() const {
  if (!(scale_min > 0.0) || !(scale_max >= scale_min)) {
    throw ConfigError("augment: need 0 < scale_min <= scale_max");
  }
  if (crop_size <= 0) throw ConfigError("augment: crop_size must be positive");
  if (pad_value < 0 || pad_value > 255) throw ConfigError("augment: pad_value must be in [0, 255]");
}

double sample_scale(Rng& rng, const AugmentConfig& cfg) {
  if (cfg.scale_min == cfg.scale_max) return cfg.scale_min;
  return uniform(rng, cfg.scale_min, cfg.scale_max);
}

std::pair<int, int> scaled_size(int height, int width, double scale) {
  return {std::max(1, static_cast<int>(std::lround(height * scale))),
          std::max(1, static_cast<int>(std::lround(width * scale)))};
}

AugmentedSample lsj_transform(const Image& image, const std::vector<InstanceAnnotation>& annotations,
                              double scale, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (image.height <= 0 || image.width <= 0 || image.pixels.empty()) {
    throw DataError("lsj_transform: empty image");
  }
  const double tol = 1e-12 * std::max(1.0, cfg.scale_max);
  if (!(scale >= cfg.scale_min - tol && scale <= cfg.scale_max + tol)) {
    throw ConfigError("lsj_transform: scale " + std::to_string(scale) + " outside [" +
                      std::to_string(cfg.scale_min) + ", " + std::to_string(cfg.scale_max) + "]");
  }
  const int crop = cfg.crop_size;
  const auto [nh, nw] = scaled_size(image.height, image.width, scale);

  AugmentedSample out;
  out.applied_scale = scale;
  out.content_height = nh;
  out.content_width = nw;
  out.offset_y = nh > crop ? static_cast<int>(uniform_int(rng, 0, nh - crop)) : 0;
  out.offset_x = nw > crop ? static_cast<int>(uniform_int(rng, 0, nw - crop)) : 0;

  const Image scaled = (nh == image.height && nw == image.width) ? image : resize_bilinear(image, nh, nw);
  out.image = Image(crop, crop, image.channels, static_cast<std::uint8_t>(cfg.pad_value));
  const int vis_h = std::min(crop, nh - out.offset_y);
  const int vis_w = std::min(crop, nw - out.offset_x);
  for (int y = 0; y < vis_h; ++y) {
    const std::uint8_t* src = scaled.px(y + out.offset_y, out.offset_x);
    std::copy(src, src + static_cast<std::size_t>(vis_w) * image.channels, out.image.px(y, 0));
  }

  // Nearest source row/column for every visible output row/column.
  std::vector<int> src_y(vis_h), src_x(vis_w);
  for (int y = 0; y < vis_h; ++y) {
    src_y[y] = std::min(image.height - 1,
                        static_cast<int>(std::floor((y + out.offset_y + 0.5) * image.height / nh)));
  }
  for (int x = 0; x < vis_w; ++x) {
    src_x[x] = std::min(image.width - 1,
                        static_cast<int>(std::floor((x + out.offset_x + 0.5) * image.width / nw)));
  }

  for (const auto& ann : annotations) {
    if (ann.mask.height != image.height || ann.mask.width != image.width) {
      throw DimensionError("lsj_transform: annotation " + std::to_string(ann.id) +
                           " mask size does not match its image");
    }
    const BinaryMask src = rle_decode(ann.mask);
    BinaryMask dst(crop, crop);
    bool any = false;
    for (int y = 0; y < vis_h; ++y)
      for (int x = 0; x < vis_w; ++x)
        if (src.at(src_y[y], src_x[x])) {
          dst.at(y, x) = 1;
          any = true;
        }
    if (!any) continue;
    InstanceAnnotation t = ann;
    t.mask = rle_encode(dst);
    t.area = static_cast<double>(rle_area(t.mask));
    t.bbox = rle_bbox(t.mask);
    out.annotations.push_back(std::move(t));
  }
  return out;
}

AugmentedSample augment_image(const Image& image, std::int64_t image_id,
                              const std::vector<InstanceAnnotation>& annotations,
                              const AugmentConfig& cfg, std::uint64_t stream) {
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(image_id), stream));
  const double s = sample_scale(rng, cfg);
  return lsj_transform(image, annotations, s, cfg, rng);
}

std::vector<PreviewRecord> augment_preview(const DatasetManifest& manifest,
                                           const std::string& dataset_dir, const AugmentConfig& cfg,
                                           int n, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (n < 1) throw ConfigError("augment-preview: n must be >= 1");
  if (manifest.images.empty()) throw DataError("augment-preview: manifest has no images");
  cfg.validate();
  fs::create_directories(out_dir);
  std::vector<PreviewRecord> records;
  for (int i = 0; i < n; ++i) {
    const ImageInfo& info = manifest.images[static_cast<std::size_t>(i) % manifest.images.size()];
    const Image img = read_png((fs::path(dataset_dir) / info.file_name).string());
    std::vector<InstanceAnnotation> anns;
    for (const auto& a : manifest.annotations)
      if (a.image_id == info.id) anns.push_back(a);
    const AugmentedSample s = augment_image(img, info.id, anns, cfg, static_cast<std::uint64_t>(i));

    Image overlay = s.image;
    for (std::size_t k = 0; k < s.annotations.size(); ++k) {
      const Rgb c = palette_color(s.annotations[k].category_id);
      blend_mask(overlay, rle_decode(s.annotations[k].mask), c, 0.5);
      draw_box(overlay, s.annotations[k].bbox, c);
    }

    PreviewRecord rec;
    rec.image_id = info.id;
    rec.scale = s.applied_scale;
    rec.offset_x = s.offset_x;
    rec.offset_y = s.offset_y;
    for (const auto& a : s.annotations) rec.surviving_ids.push_back(a.id);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "preview_%04d", i);
    rec.image_path = (fs::path(out_dir) / (std::string(stem) + ".png")).string();
    rec.sidecar_path = (fs::path(out_dir) / (std::string(stem) + ".json")).string();
    write_png(rec.image_path, overlay);
    nlohmann::ordered_json side = {{"image_id", rec.image_id},
                                   {"scale", rec.scale},
                                   {"offsets", {rec.offset_x, rec.offset_y}},
                                   {"surviving_ids", rec.surviving_ids}};
    write_text_file(rec.sidecar_path, side.dump(1) + "\n");
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace plainseg
