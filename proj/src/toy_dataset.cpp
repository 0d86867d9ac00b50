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

#include "plainseg/toy_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "plainseg/error.hpp"
#include "plainseg/rng.hpp"

namespace plainseg {

namespace {

constexpr int kNumCategories = 5;

std::vector<double> effective_weights(const ToyDatasetConfig& cfg) {
  const auto cats = toy_categories();
  double common = 0.0, rare = 0.0;
  for (int i = 0; i < kNumCategories; ++i) (cats[i].is_rare ? rare : common) += cfg.category_weights[i];
  std::vector<double> w(kNumCategories);
  for (int i = 0; i < kNumCategories; ++i) {
    if (cats[i].is_rare)
      w[i] = rare > 0 ? cfg.category_weights[i] / rare * cfg.rare_fraction_target
                      : cfg.rare_fraction_target / 2.0;
    else
      w[i] = common > 0 ? cfg.category_weights[i] / common * (1.0 - cfg.rare_fraction_target)
                        : (1.0 - cfg.rare_fraction_target) / 3.0;
  }
  return w;
}

struct Placement {
  int x0, y0, size;
};

bool overlaps(const Placement& a, const Placement& b, int margin) {
  return a.x0 - margin < b.x0 + b.size && b.x0 - margin < a.x0 + a.size &&
         a.y0 - margin < b.y0 + b.size && b.y0 - margin < a.y0 + a.size;
}

}  // namespace

void ToyDatasetConfig::validate() const {
  if (num_images < 1) throw ConfigError("toy dataset: num_images must be >= 1");
  if (static_cast<int>(category_weights.size()) != kNumCategories) {
    throw ConfigError("toy dataset: expected 5 category weights");
  }
  double s = 0.0;
  for (double w : category_weights) {
    if (!(w >= 0.0)) throw ConfigError("toy dataset: category weights must be non-negative");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-6) throw ConfigError("toy dataset: category weights must sum to 1");
  if (!(rare_fraction_target > 0.0 && rare_fraction_target < 1.0)) {
    throw ConfigError("toy dataset: rare_fraction_target must lie in (0, 1)");
  }
  if (min_shapes < 1 || max_shapes < min_shapes) {
    throw ConfigError("toy dataset: need 1 <= min_shapes <= max_shapes");
  }
  if (min_shape_size < 4 || max_shape_size < min_shape_size) {
    throw ConfigError("toy dataset: need 4 <= min_shape_size <= max_shape_size");
  }
  if (image_size < max_shape_size + 2) {
    throw ConfigError("toy dataset: image_size " + std::to_string(image_size) +
                      " too small for shapes up to " + std::to_string(max_shape_size) + " px");
  }
}

std::vector<CategoryDef> toy_categories() {
  return {{1, "disk", false},
          {2, "square", false},
          {3, "triangle", false},
          {4, "cross", true},
          {5, "ring", true}};
}

BinaryMask render_shape_mask(ShapeKind kind, double x0, double y0, double size, int height,
                             int width) {
  BinaryMask m(height, width);
  const double r = size / 2.0;
  const double cx = x0 + r;
  const double cy = y0 + r;
  const int ys = std::max(0, static_cast<int>(std::floor(y0)) - 1);
  const int ye = std::min(height, static_cast<int>(std::ceil(y0 + size)) + 1);
  const int xs = std::max(0, static_cast<int>(std::floor(x0)) - 1);
  const int xe = std::min(width, static_cast<int>(std::ceil(x0 + size)) + 1);
  for (int y = ys; y < ye; ++y) {
    for (int x = xs; x < xe; ++x) {
      const double px = x + 0.5 - cx;
      const double py = y + 0.5 - cy;
      bool inside = false;
      switch (kind) {
        case ShapeKind::kDisk:
          inside = px * px + py * py <= r * r;
          break;
        case ShapeKind::kSquare:
          inside = std::abs(px) <= r && std::abs(py) <= r;
          break;
        case ShapeKind::kTriangle: {
          const double depth = py + r;  // distance below the apex
          inside = depth >= 0.0 && depth <= size && std::abs(px) <= depth / 2.0;
          break;
        }
        case ShapeKind::kCross: {
          const double t = size / 6.0;
          inside = (std::abs(px) <= r && std::abs(py) <= t) || (std::abs(px) <= t && std::abs(py) <= r);
          break;
        }
        case ShapeKind::kRing: {
          const double d2 = px * px + py * py;
          inside = d2 <= r * r && d2 >= 0.55 * 0.55 * r * r;
          break;
        }
      }
      if (inside) m.at(y, x) = 1;
    }
  }
  return m;
}

ToyDataset generate_toy_dataset(const ToyDatasetConfig& cfg) {
  cfg.validate();
  const int n_img = cfg.num_images;
  const int size = cfg.image_size;

  std::vector<int> shape_counts(n_img);
  for (int i = 0; i < n_img; ++i) {
    Rng rng(derive_seed(cfg.seed, 1, i));
    shape_counts[i] = static_cast<int>(uniform_int(rng, cfg.min_shapes, cfg.max_shapes));
  }
  const int total = std::accumulate(shape_counts.begin(), shape_counts.end(), 0);

  // Largest-deficit assignment keeps every category within one instance of its quota.
  const std::vector<double> w = effective_weights(cfg);
  std::vector<int> sequence(total);
  std::vector<int> counts(kNumCategories, 0);
  for (int i = 0; i < total; ++i) {
    int best = 0;
    double best_deficit = -1e300;
    for (int c = 0; c < kNumCategories; ++c) {
      const double deficit = w[c] * (i + 1) - counts[c];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = c;
      }
    }
    ++counts[best];
    sequence[i] = best + 1;
  }
  {
    Rng rng(derive_seed(cfg.seed, 2));
    for (int i = total - 1; i > 0; --i) std::swap(sequence[i], sequence[uniform_int(rng, 0, i)]);
  }
  std::vector<int> first(n_img + 1, 0);
  for (int i = 0; i < n_img; ++i) first[i + 1] = first[i] + shape_counts[i];

  ToyDataset ds;
  ds.manifest.categories = toy_categories();
  ds.images.resize(n_img);
  std::vector<std::vector<InstanceAnnotation>> per_image(n_img);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_img; ++i) {
    Rng rng(derive_seed(cfg.seed, 3, i));
    Image img(size, size, 3);
    int base[3];
    for (int& b : base) b = static_cast<int>(uniform_int(rng, 20, 60));
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c)
          img.px(y, x)[c] = static_cast<std::uint8_t>(base[c] + uniform_int(rng, -6, 6));

    std::vector<Placement> placed;
    for (int k = first[i]; k < first[i + 1]; ++k) {
      const int category = sequence[k];
      bool ok = false;
      Placement p{};
      for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
        p.size = static_cast<int>(uniform_int(rng, cfg.min_shape_size, cfg.max_shape_size));
        p.x0 = static_cast<int>(uniform_int(rng, 1, size - p.size - 1));
        p.y0 = static_cast<int>(uniform_int(rng, 1, size - p.size - 1));
        ok = std::none_of(placed.begin(), placed.end(),
                          [&](const Placement& q) { return overlaps(p, q, 2); });
      }
      if (!ok) continue;
      BinaryMask mask = render_shape_mask(static_cast<ShapeKind>(category - 1), p.x0, p.y0, p.size,
                                          size, size);
      Rgb color;
      for (auto& c : color) c = static_cast<std::uint8_t>(uniform_int(rng, 110, 255));
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          if (mask.at(y, x)) std::copy(color.begin(), color.end(), img.px(y, x));
      InstanceAnnotation ann;
      ann.image_id = i + 1;
      ann.category_id = category;
      ann.mask = rle_encode(mask);
      ann.area = static_cast<double>(rle_area(ann.mask));
      ann.bbox = rle_bbox(ann.mask);
      if (ann.area > 0) per_image[i].push_back(std::move(ann));
      placed.push_back(p);
    }
    ds.images[i] = std::move(img);
  }

  std::int64_t next_id = 1;
  for (int i = 0; i < n_img; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06d.png", i + 1);
    ds.manifest.images.push_back({i + 1, name, size, size});
    for (auto& ann : per_image[i]) {
      ann.id = next_id++;
      ds.manifest.annotations.push_back(std::move(ann));
    }
  }
  return ds;
}

void write_toy_dataset(const ToyDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    write_png((fs::path(dir) / ds.manifest.images[i].file_name).string(), ds.images[i]);
  }
  write_text_file((fs::path(dir) / "annotations.json").string(), serialize_coco_json(ds.manifest));
}

}  // namespace plainseg
