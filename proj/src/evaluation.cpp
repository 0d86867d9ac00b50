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

#include "plainseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "plainseg/error.hpp"

namespace plainseg {

std::vector<double> EvalConfig::default_thresholds() {
  std::vector<double> t(10);
  const double step = (0.95 - 0.5) / 9.0;
  for (int i = 0; i < 10; ++i) t[i] = 0.5 + i * step;
  return t;
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw ConfigError("eval.iou_thresholds must not be empty");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    if (!(iou_thresholds[i] > 0.0 && iou_thresholds[i] < 1.0))
      throw ConfigError("eval.iou_thresholds must lie in (0, 1)");
    if (i && !(iou_thresholds[i] > iou_thresholds[i - 1]))
      throw ConfigError("eval.iou_thresholds must be strictly increasing");
  }
  if (max_dets_per_image < 1) throw ConfigError("eval.max_dets_per_image must be >= 1");
  if (recall_points < 2) throw ConfigError("eval.recall_points must be >= 2");
}

ImageMatch match_image(const std::vector<double>& scores, const std::vector<double>& ious,
                       const std::vector<bool>& gt_crowd, double threshold, int max_dets) {
  const std::size_t nd = scores.size(), ng = gt_crowd.size();
  ImageMatch m;
  m.order.resize(nd);
  std::iota(m.order.begin(), m.order.end(), 0);
  std::stable_sort(m.order.begin(), m.order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  if (static_cast<int>(nd) > max_dets) m.order.resize(max_dets);
  m.gt_matched.assign(ng, false);
  for (int d : m.order) {
    int best = -1;
    double best_iou = threshold;
    for (std::size_t g = 0; g < ng; ++g) {
      if (gt_crowd[g] || m.gt_matched[g]) continue;
      const double v = ious[d * ng + g];
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    bool ignored = false;
    if (best < 0) {
      best_iou = threshold;
      for (std::size_t g = 0; g < ng; ++g) {
        if (!gt_crowd[g]) continue;
        const double v = ious[d * ng + g];
        if (v >= best_iou && (best < 0 || v > best_iou)) {
          best = static_cast<int>(g);
          best_iou = v;
        }
      }
      ignored = best >= 0;
    }
    if (best >= 0) m.gt_matched[best] = true;
    m.det_gt.push_back(best);
    m.det_ignored.push_back(ignored);
  }
  return m;
}

std::optional<double> average_precision(const std::vector<bool>& is_tp, std::int64_t num_gt,
                                        int recall_points) {
  if (num_gt <= 0) return std::nullopt;
  const std::size_t n = is_tp.size();
  std::vector<double> recall(n), precision(n);
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    (is_tp[i] ? tp : fp) += 1.0;
    recall[i] = tp / static_cast<double>(num_gt);
    precision[i] = tp / (tp + fp);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  const double step = 1.0 / (recall_points - 1);
  double sum = 0.0;
  for (int k = 0; k < recall_points; ++k) {
    const double r = k * step;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / recall_points;
}

namespace {

double box_overlap(const BoundingBox& d, const BoundingBox& g, bool crowd) {
  if (!crowd) return box_iou(d, g);
  const double iw = std::max(0.0, std::min(d.x + d.w, g.x + g.w) - std::max(d.x, g.x));
  const double ih = std::max(0.0, std::min(d.y + d.h, g.y + g.h) - std::max(d.y, g.y));
  const double a = d.area();
  return a > 0.0 ? iw * ih / a : 0.0;
}

std::optional<double> mean_present(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  int n = 0;
  for (const auto& x : v)
    if (x) {
      s += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / n;
}

int threshold_index(const std::vector<double>& t, double v) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (std::abs(t[i] - v) < 1e-9) return static_cast<int>(i);
  return -1;
}

}  // namespace

EvalReport evaluate(const std::vector<DetectionResult>& detections, const DatasetManifest& manifest,
                    const EvalConfig& cfg) {
  cfg.validate();
  using Key = std::pair<std::int64_t, int>;  // image id, category id
  std::map<Key, std::vector<const DetectionResult*>> dets;
  std::map<Key, std::vector<const InstanceAnnotation*>> gts;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const DetectionResult& d = detections[i];
    const ImageInfo* img = manifest.find_image(d.image_id);
    const std::string where = "detection #" + std::to_string(i);
    if (!img) throw DanglingReferenceError(where + ": unknown image_id " + std::to_string(d.image_id));
    if (!manifest.find_category(d.category_id))
      throw DanglingReferenceError(where + ": unknown category_id " + std::to_string(d.category_id));
    if (cfg.iou_kind == IouKind::kMask && (d.mask.height != img->height || d.mask.width != img->width))
      throw DimensionError(where + ": mask size does not match image " + std::to_string(d.image_id));
    dets[{d.image_id, d.category_id}].push_back(&d);
  }
  for (const auto& a : manifest.annotations) gts[{a.image_id, a.category_id}].push_back(&a);

  std::vector<std::int64_t> image_ids;
  for (const auto& im : manifest.images) image_ids.push_back(im.id);
  std::sort(image_ids.begin(), image_ids.end());

  const std::size_t nt = cfg.iou_thresholds.size();
  EvalReport report;
  std::vector<std::vector<std::optional<double>>> ap_by_threshold(nt);
  std::vector<std::optional<double>> rare_aps;

  for (const CategoryDef& cat : manifest.categories) {
    // Per image: scores, ious, crowd flags.
    struct Cell {
      std::vector<double> scores;
      std::vector<double> ious;
      std::vector<bool> crowd;
    };
    std::vector<Cell> cells;
    std::int64_t num_gt = 0;
    for (std::int64_t id : image_ids) {
      static const std::vector<const DetectionResult*> kNoDets;
      static const std::vector<const InstanceAnnotation*> kNoGts;
      const auto di = dets.find({id, cat.id});
      const auto gi = gts.find({id, cat.id});
      const auto& D = di == dets.end() ? kNoDets : di->second;
      const auto& G = gi == gts.end() ? kNoGts : gi->second;
      Cell c;
      for (const auto* d : D) c.scores.push_back(d->score);
      for (const auto* g : G) {
        c.crowd.push_back(g->iscrowd);
        if (!g->iscrowd) ++num_gt;
      }
      if (cfg.iou_kind == IouKind::kMask) {
        std::vector<RleMask> dm, gm;
        std::vector<std::uint8_t> cr;
        for (const auto* d : D) dm.push_back(d->mask);
        for (const auto* g : G) {
          gm.push_back(g->mask);
          cr.push_back(g->iscrowd ? 1 : 0);
        }
        c.ious = mask_iou_matrix(dm, gm, cr);
      } else {
        for (const auto* d : D)
          for (const auto* g : G) c.ious.push_back(box_overlap(d->bbox, g->bbox, g->iscrowd));
      }
      cells.push_back(std::move(c));
    }

    std::vector<std::optional<double>> aps(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      std::vector<std::pair<double, bool>> scored;  // concatenated in image-id order
      for (const Cell& c : cells) {
        const ImageMatch m = match_image(c.scores, c.ious, c.crowd, cfg.iou_thresholds[t],
                                         cfg.max_dets_per_image);
        for (std::size_t k = 0; k < m.order.size(); ++k) {
          if (m.det_ignored[k]) continue;
          scored.emplace_back(c.scores[m.order[k]], m.det_gt[k] >= 0);
        }
      }
      std::stable_sort(scored.begin(), scored.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      std::vector<bool> tp;
      for (const auto& s : scored) tp.push_back(s.second);
      aps[t] = average_precision(tp, num_gt, cfg.recall_points);
      ap_by_threshold[t].push_back(aps[t]);
      if (t == 0) {
        const auto m = static_cast<std::int64_t>(std::count(tp.begin(), tp.end(), true));
        report.matched += m;
        report.unmatched_detections += static_cast<std::int64_t>(tp.size()) - m;
        report.unmatched_gt += num_gt - m;
      }
    }
    const auto cat_ap = mean_present(aps);
    report.per_category[cat.id] = cat_ap;
    if (cat.is_rare) rare_aps.push_back(cat_ap);
  }

  std::vector<std::optional<double>> all;
  for (const auto& [id, ap] : report.per_category) all.push_back(ap);
  report.map = mean_present(all);
  report.rare_map = mean_present(rare_aps);
  if (const int i = threshold_index(cfg.iou_thresholds, 0.5); i >= 0) report.ap50 = mean_present(ap_by_threshold[i]);
  if (const int i = threshold_index(cfg.iou_thresholds, 0.75); i >= 0) report.ap75 = mean_present(ap_by_threshold[i]);
  return report;
}

std::string format_percent(const std::optional<double>& v) {
  if (!v) return "—";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

std::string render_report_text(const EvalReport& r, const DatasetManifest& manifest) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %8s\n", "metric", "AP %");
  os << line;
  auto row = [&](const std::string& name, const std::optional<double>& v) {
    std::snprintf(line, sizeof line, "%-24s %8s\n", name.c_str(), format_percent(v).c_str());
    os << line;
  };
  row("mAP", r.map);
  row("AP50", r.ap50);
  row("AP75", r.ap75);
  row("rare mAP", r.rare_map);
  os << '\n';
  for (const auto& c : manifest.categories) {
    const auto it = r.per_category.find(c.id);
    row(std::to_string(c.id) + " " + c.name + (c.is_rare ? " (rare)" : ""),
        it == r.per_category.end() ? std::nullopt : it->second);
  }
  os << "\nmatched " << r.matched << ", unmatched detections " << r.unmatched_detections
     << ", unmatched ground truth " << r.unmatched_gt << '\n';
  return os.str();
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> opt_from(const nlohmann::ordered_json& j, const char* key) {
  if (!j.contains(key)) throw MissingFieldError(std::string("report: missing field ") + key);
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) throw DataError(std::string("report: field ") + key + " must be a number or null");
  return v.get<double>();
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mAP"] = opt_json(r.map);
  j["ap50"] = opt_json(r.ap50);
  j["ap75"] = opt_json(r.ap75);
  j["rare_map"] = opt_json(r.rare_map);
  nlohmann::ordered_json pc = nlohmann::ordered_json::object();
  for (const auto& [id, ap] : r.per_category) pc[std::to_string(id)] = opt_json(ap);
  j["per_category"] = pc;
  j["matched"] = r.matched;
  j["unmatched_detections"] = r.unmatched_detections;
  j["unmatched_gt"] = r.unmatched_gt;
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: invalid JSON: ") + e.what());
  }
  EvalReport r;
  r.map = opt_from(j, "mAP");
  r.ap50 = opt_from(j, "ap50");
  r.ap75 = opt_from(j, "ap75");
  r.rare_map = opt_from(j, "rare_map");
  if (!j.contains("per_category") || !j["per_category"].is_object())
    throw MissingFieldError("report: missing object per_category");
  for (const auto& [k, v] : j["per_category"].items())
    r.per_category[std::stoi(k)] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
  r.matched = j.value("matched", std::int64_t{0});
  r.unmatched_detections = j.value("unmatched_detections", std::int64_t{0});
  r.unmatched_gt = j.value("unmatched_gt", std::int64_t{0});
  return r;
}

}  // namespace plainseg
