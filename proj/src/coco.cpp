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

#include "plainseg/coco.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "plainseg/error.hpp"

namespace plainseg {

using json = nlohmann::ordered_json;

const ImageInfo* DatasetManifest::find_image(std::int64_t id) const {
  for (const auto& im : images)
    if (im.id == id) return &im;
  return nullptr;
}

const CategoryDef* DatasetManifest::find_category(int id) const {
  for (const auto& c : categories)
    if (c.id == id) return &c;
  return nullptr;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

namespace {

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw MissingFieldError(where + ": missing field '" + key + "'");
  }
  return obj.at(key);
}

template <typename T>
T number(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) throw DataError(where + ": field '" + key + "' is not a number");
  return v.get<T>();
}

RleMask parse_rle(const json& seg, const std::string& where) {
  if (!seg.contains("size") || !seg.contains("counts")) {
    throw MalformedSegmentationError(where + ": RLE segmentation needs 'size' and 'counts'");
  }
  const json& size = seg.at("size");
  if (!size.is_array() || size.size() != 2 || !size[0].is_number_integer() ||
      !size[1].is_number_integer()) {
    throw MalformedSegmentationError(where + ": RLE 'size' must be [height, width]");
  }
  const int h = size[0].get<int>();
  const int w = size[1].get<int>();
  const json& counts = seg.at("counts");
  RleMask rle;
  try {
    if (counts.is_string()) {
      rle = rle_counts_from_string(counts.get<std::string>(), h, w);
    } else if (counts.is_array()) {
      rle.height = h;
      rle.width = w;
      for (const auto& c : counts) {
        if (!c.is_number_integer() || c.get<long long>() < 0) {
          throw MalformedSegmentationError(where + ": RLE counts must be non-negative integers");
        }
        rle.counts.push_back(c.get<std::uint32_t>());
      }
    } else {
      throw MalformedSegmentationError(where + ": RLE 'counts' must be a list or string");
    }
    rle_validate(rle);
  } catch (const MalformedRleError& e) {
    throw MalformedSegmentationError(where + ": " + e.what());
  }
  return rle;
}

RleMask parse_segmentation(const json& seg, int height, int width, const std::string& where) {
  if (seg.is_object()) {
    RleMask rle = parse_rle(seg, where);
    if (rle.height != height || rle.width != width) {
      throw MalformedSegmentationError(where + ": RLE size does not match its image");
    }
    return rle;
  }
  if (seg.is_array()) {
    std::vector<std::vector<double>> polys;
    for (const auto& p : seg) {
      if (!p.is_array() || p.size() < 6 || p.size() % 2 != 0) {
        throw MalformedSegmentationError(where + ": polygon needs an even count of >= 6 numbers");
      }
      std::vector<double> coords;
      for (const auto& v : p) {
        if (!v.is_number()) throw MalformedSegmentationError(where + ": non-numeric polygon vertex");
        coords.push_back(v.get<double>());
      }
      polys.push_back(std::move(coords));
    }
    if (polys.empty()) throw MalformedSegmentationError(where + ": empty polygon list");
    return rle_encode(rasterize_polygons(polys, height, width));
  }
  throw MalformedSegmentationError(where + ": segmentation must be a polygon list or RLE object");
}

json rle_json(const RleMask& rle) {
  return json{{"size", {rle.height, rle.width}}, {"counts", rle.counts}};
}

json bbox_json(const BoundingBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

BoundingBox parse_bbox(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4) throw DataError(where + ": bbox must be [x, y, w, h]");
  for (const auto& x : v)
    if (!x.is_number()) throw DataError(where + ": bbox entries must be numbers");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
}

json parse_document(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

void validate_manifest(const DatasetManifest& m) {
  std::set<std::int64_t> image_ids;
  for (const auto& im : m.images) {
    if (!image_ids.insert(im.id).second) throw DataError("duplicate image id " + std::to_string(im.id));
    if (im.height <= 0 || im.width <= 0) {
      throw DataError("image " + std::to_string(im.id) + " has non-positive size");
    }
  }
  std::set<int> cat_ids;
  for (const auto& c : m.categories)
    if (!cat_ids.insert(c.id).second) throw DataError("duplicate category id " + std::to_string(c.id));
  std::set<std::int64_t> ann_ids;
  for (const auto& a : m.annotations) {
    if (!ann_ids.insert(a.id).second) {
      throw DataError("duplicate annotation id " + std::to_string(a.id));
    }
    if (!image_ids.count(a.image_id)) {
      throw DanglingReferenceError("annotation " + std::to_string(a.id) +
                                   " references unknown image_id " + std::to_string(a.image_id));
    }
    if (!cat_ids.count(a.category_id)) {
      throw DanglingReferenceError("annotation " + std::to_string(a.id) +
                                   " references unknown category_id " +
                                   std::to_string(a.category_id));
    }
  }
}

DatasetManifest parse_coco_json(const std::string& text) {
  const json doc = parse_document(text);
  DatasetManifest m;
  for (const char* key : {"images", "annotations", "categories"}) {
    if (!field(doc, key, "document").is_array()) {
      throw DataError(std::string("document: '") + key + "' must be an array");
    }
  }
  for (const auto& im : doc.at("images")) {
    ImageInfo info;
    info.id = number<std::int64_t>(im, "id", "image");
    const std::string where = "image " + std::to_string(info.id);
    info.height = number<int>(im, "height", where);
    info.width = number<int>(im, "width", where);
    if (im.contains("file_name")) info.file_name = im.at("file_name").get<std::string>();
    m.images.push_back(std::move(info));
  }
  for (const auto& c : doc.at("categories")) {
    CategoryDef cat;
    cat.id = number<int>(c, "id", "category");
    cat.name = field(c, "name", "category " + std::to_string(cat.id)).get<std::string>();
    if (c.contains("is_rare")) cat.is_rare = c.at("is_rare").get<bool>();
    m.categories.push_back(std::move(cat));
  }
  // Validate ids before rasterizing so dangling references are reported as such.
  for (const auto& a : doc.at("annotations")) {
    InstanceAnnotation ann;
    ann.id = number<std::int64_t>(a, "id", "annotation");
    const std::string where = "annotation " + std::to_string(ann.id);
    ann.image_id = number<std::int64_t>(a, "image_id", where);
    ann.category_id = number<int>(a, "category_id", where);
    const ImageInfo* im = m.find_image(ann.image_id);
    if (!im) {
      throw DanglingReferenceError(where + " references unknown image_id " +
                                   std::to_string(ann.image_id));
    }
    if (!m.find_category(ann.category_id)) {
      throw DanglingReferenceError(where + " references unknown category_id " +
                                   std::to_string(ann.category_id));
    }
    ann.mask = parse_segmentation(field(a, "segmentation", where), im->height, im->width, where);
    if (a.contains("iscrowd")) {
      const json& c = a.at("iscrowd");
      ann.iscrowd = c.is_boolean() ? c.get<bool>() : c.get<int>() != 0;
    }
    ann.area = static_cast<double>(rle_area(ann.mask));
    ann.bbox = rle_bbox(ann.mask);
    m.annotations.push_back(std::move(ann));
  }
  validate_manifest(m);
  return m;
}

DatasetManifest load_coco_json(const std::string& path) { return parse_coco_json(read_text_file(path)); }

std::string serialize_coco_json(const DatasetManifest& m) {
  json doc;
  doc["images"] = json::array();
  for (const auto& im : m.images) {
    doc["images"].push_back(
        {{"id", im.id}, {"file_name", im.file_name}, {"height", im.height}, {"width", im.width}});
  }
  doc["annotations"] = json::array();
  for (const auto& a : m.annotations) {
    doc["annotations"].push_back({{"id", a.id},
                                  {"image_id", a.image_id},
                                  {"category_id", a.category_id},
                                  {"bbox", bbox_json(a.bbox)},
                                  {"area", a.area},
                                  {"iscrowd", a.iscrowd ? 1 : 0},
                                  {"segmentation", rle_json(a.mask)}});
  }
  doc["categories"] = json::array();
  for (const auto& c : m.categories) {
    doc["categories"].push_back({{"id", c.id}, {"name", c.name}, {"is_rare", c.is_rare}});
  }
  return doc.dump(1) + "\n";
}

std::vector<DetectionResult> parse_results_json(const std::string& text) {
  const json doc = parse_document(text);
  if (!doc.is_array()) throw MalformedDetectionError("results document must be a JSON array");
  std::vector<DetectionResult> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& d = doc[i];
    const std::string where = "detection #" + std::to_string(i);
    try {
      DetectionResult r;
      r.image_id = number<std::int64_t>(d, "image_id", where);
      r.category_id = number<int>(d, "category_id", where);
      r.score = number<double>(d, "score", where);
      if (!std::isfinite(r.score)) throw DataError(where + ": score is not finite");
      const json& seg = field(d, "segmentation", where);
      if (!seg.is_object()) throw MalformedSegmentationError(where + ": segmentation must be RLE");
      r.mask = parse_rle(seg, where);
      r.bbox = d.contains("bbox") ? parse_bbox(d.at("bbox"), where) : rle_bbox(r.mask);
      out.push_back(std::move(r));
    } catch (const MalformedDetectionError&) {
      throw;
    } catch (const DataError& e) {
      throw MalformedDetectionError(e.what());
    } catch (const json::exception& e) {
      throw MalformedDetectionError(where + ": " + e.what());
    }
  }
  return out;
}

std::string serialize_results_json(const std::vector<DetectionResult>& results) {
  json doc = json::array();
  for (const auto& r : results) {
    doc.push_back({{"image_id", r.image_id},
                   {"category_id", r.category_id},
                   {"bbox", bbox_json(r.bbox)},
                   {"score", r.score},
                   {"segmentation", rle_json(r.mask)}});
  }
  return doc.dump(1) + "\n";
}

DatasetStats dataset_stats(const DatasetManifest& m) {
  DatasetStats s;
  for (const auto& c : m.categories) s.per_category[c.id] = 0;
  for (const auto& a : m.annotations) {
    ++s.per_category[a.category_id];
    ++s.total;
    const CategoryDef* c = m.find_category(a.category_id);
    if (c && c->is_rare) ++s.rare;
  }
  if (s.total > 0) s.rare_fraction = static_cast<double>(s.rare) / static_cast<double>(s.total);
  return s;
}

}  // namespace plainseg
