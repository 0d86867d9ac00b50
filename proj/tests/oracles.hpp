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

// Brute-force reference implementations. Each one is written from the
// defining property rather than by transcribing the production code, and
// works on dense data where that makes it simpler.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "plainseg/coco.hpp"
#include "plainseg/evaluation.hpp"
#include "plainseg/geometry.hpp"
#include "plainseg/rle.hpp"
#include "plainseg/rng.hpp"

namespace plainseg::oracle {

inline double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Rank r of box i: boxes sort by score descending, lower index first on ties.
inline bool ranks_before(const std::vector<double>& s, int i, int j) {
  return s[i] > s[j] || (s[i] == s[j] && i < j);
}

// Repeatedly take the best remaining box and discard everything overlapping it.
inline std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                            double thr) {
  std::set<int> pool;
  for (int i = 0; i < static_cast<int>(boxes.size()); ++i) pool.insert(i);
  std::vector<int> keep;
  while (!pool.empty()) {
    int best = *pool.begin();
    for (int i : pool)
      if (ranks_before(scores, i, best)) best = i;
    keep.push_back(best);
    std::set<int> rest;
    for (int i : pool)
      if (i != best && iou(boxes[best], boxes[i]) <= thr) rest.insert(i);
    pool = rest;
  }
  return keep;
}

struct Assign {
  std::vector<int> matched;
  std::vector<int> label;
};

// Positive iff some GT reaches `thr`; the match is the first GT index among
// those with the largest IoU.
inline Assign assign(const std::vector<Box>& boxes, const std::vector<Box>& gts, double thr) {
  Assign a;
  for (const Box& b : boxes) {
    double mx = -1.0;
    for (const Box& g : gts) mx = std::max(mx, iou(b, g));
    int m = -1;
    for (std::size_t j = 0; j < gts.size() && m < 0; ++j)
      if (iou(b, gts[j]) == mx) m = static_cast<int>(j);
    a.matched.push_back(m);
    a.label.push_back(m >= 0 && mx >= thr ? 1 : 0);
  }
  return a;
}

inline Assign assign_anchors(const std::vector<Box>& anchors, const std::vector<Box>& gts,
                             double low, double high) {
  Assign a = assign(anchors, gts, high);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (gts.empty()) {
      a.label[i] = 0;
      continue;
    }
    double mx = 0.0;
    for (const Box& g : gts) mx = std::max(mx, iou(anchors[i], g));
    a.label[i] = mx >= high ? 1 : (mx >= low ? -1 : 0);
    // Low-quality rule: this anchor attains some GT's best IoU.
    for (const Box& g : gts) {
      double best = 0.0;
      for (const Box& o : anchors) best = std::max(best, iou(o, g));
      if (best > 0.0 && iou(anchors[i], g) == best) a.label[i] = 1;
    }
  }
  return a;
}

// AP by enumerating every cutoff of the ranked list: the interpolated
// precision at recall r is the best precision over cutoffs reaching r.
inline std::optional<double> ap_step(const std::vector<bool>& tp, long num_gt, int points) {
  if (num_gt <= 0) return std::nullopt;
  std::vector<double> rc, pr;
  long t = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    t += tp[i] ? 1 : 0;
    rc.push_back(static_cast<double>(t) / num_gt);
    pr.push_back(static_cast<double>(t) / static_cast<double>(i + 1));
  }
  const double step = 1.0 / (points - 1);
  double total = 0.0;
  for (int k = 0; k < points; ++k) {
    const double r = k * step;
    double best = 0.0;
    for (std::size_t i = 0; i < rc.size(); ++i)
      if (rc[i] >= r) best = std::max(best, pr[i]);
    total += best;
  }
  return total / points;
}

// Dense-pixel overlap; crowd regions use intersection over the detection area.
inline double dense_overlap(const BinaryMask& d, const BinaryMask& g, bool crowd) {
  long inter = 0, ad = 0, ag = 0;
  for (std::size_t i = 0; i < d.data.size(); ++i) {
    inter += d.data[i] && g.data[i];
    ad += d.data[i];
    ag += g.data[i];
  }
  const long den = crowd ? ad : ad + ag - inter;
  return den > 0 ? static_cast<double>(inter) / den : 0.0;
}

// End-to-end evaluator: decodes every mask, recomputes overlaps densely,
// matches greedily and integrates with ap_step.
inline EvalReport evaluate(const std::vector<DetectionResult>& dets, const DatasetManifest& m,
                           const EvalConfig& cfg) {
  std::vector<std::int64_t> ids;
  for (const auto& im : m.images) ids.push_back(im.id);
  std::sort(ids.begin(), ids.end());
  EvalReport rep;
  std::vector<std::vector<double>> per_thr(cfg.iou_thresholds.size());
  std::vector<double> rare;
  for (const auto& cat : m.categories) {
    std::vector<double> aps;
    long num_gt = 0;
    for (const auto& a : m.annotations)
      if (a.category_id == cat.id && !a.iscrowd) ++num_gt;
    for (std::size_t ti = 0; ti < cfg.iou_thresholds.size(); ++ti) {
      const double thr = cfg.iou_thresholds[ti];
      std::vector<std::pair<double, bool>> ranked;
      for (std::int64_t id : ids) {
        std::vector<int> di;
        for (int i = 0; i < static_cast<int>(dets.size()); ++i)
          if (dets[i].image_id == id && dets[i].category_id == cat.id) di.push_back(i);
        std::vector<const InstanceAnnotation*> g;
        for (const auto& a : m.annotations)
          if (a.image_id == id && a.category_id == cat.id) g.push_back(&a);
        // Highest score first; among equal scores, input order.
        std::vector<int> order;
        std::vector<bool> used(di.size(), false);
        for (std::size_t k = 0; k < di.size(); ++k) {
          int pick = -1;
          for (std::size_t c = 0; c < di.size(); ++c)
            if (!used[c] && (pick < 0 || dets[di[c]].score > dets[di[pick]].score)) pick = static_cast<int>(c);
          used[pick] = true;
          order.push_back(di[pick]);
        }
        if (static_cast<int>(order.size()) > cfg.max_dets_per_image) order.resize(cfg.max_dets_per_image);
        std::vector<bool> taken(g.size(), false);
        for (int d : order) {
          const BinaryMask dm = rle_decode(dets[d].mask);
          int best = -1;
          double bv = -1.0;
          for (std::size_t j = 0; j < g.size(); ++j) {
            if (g[j]->iscrowd || taken[j]) continue;
            const double v = dense_overlap(dm, rle_decode(g[j]->mask), false);
            if (v >= thr && v > bv) {
              best = static_cast<int>(j);
              bv = v;
            }
          }
          if (best >= 0) {
            taken[best] = true;
            ranked.emplace_back(dets[d].score, true);
            continue;
          }
          bool crowd_hit = false;
          for (std::size_t j = 0; j < g.size(); ++j)
            if (g[j]->iscrowd && dense_overlap(dm, rle_decode(g[j]->mask), true) >= thr) crowd_hit = true;
          if (!crowd_hit) ranked.emplace_back(dets[d].score, false);
        }
      }
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      std::vector<bool> tp;
      for (const auto& r : ranked) tp.push_back(r.second);
      const auto ap = ap_step(tp, num_gt, cfg.recall_points);
      if (ap) {
        aps.push_back(*ap);
        per_thr[ti].push_back(*ap);
      }
    }
    if (aps.empty()) {
      rep.per_category[cat.id] = std::nullopt;
      continue;
    }
    double s = 0.0;
    for (double v : aps) s += v;
    rep.per_category[cat.id] = s / aps.size();
    if (cat.is_rare) rare.push_back(s / aps.size());
  }
  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
  };
  std::vector<double> cat_aps;
  for (const auto& [id, ap] : rep.per_category)
    if (ap) cat_aps.push_back(*ap);
  rep.map = mean(cat_aps);
  rep.rare_map = mean(rare);
  for (std::size_t ti = 0; ti < cfg.iou_thresholds.size(); ++ti) {
    if (std::abs(cfg.iou_thresholds[ti] - 0.5) < 1e-9) rep.ap50 = mean(per_thr[ti]);
    if (std::abs(cfg.iou_thresholds[ti] - 0.75) < 1e-9) rep.ap75 = mean(per_thr[ti]);
  }
  return rep;
}

// Random small evaluation scene: up to `max_images` images of size 16..24,
// GT instances as random rectangles or blobs (some crowd), detections as
// jittered copies of GT and random false positives.
struct Scene {
  DatasetManifest manifest;
  std::vector<DetectionResult> detections;
};

inline BinaryMask random_blob(Rng& rng, int h, int w) {
  BinaryMask m(h, w);
  const int x0 = static_cast<int>(uniform_int(rng, 0, w - 2));
  const int y0 = static_cast<int>(uniform_int(rng, 0, h - 2));
  const int x1 = static_cast<int>(uniform_int(rng, x0 + 1, w - 1));
  const int y1 = static_cast<int>(uniform_int(rng, y0 + 1, h - 1));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (uniform01(rng) < 0.9) m.at(y, x) = 1;
  m.at(y0, x0) = 1;
  return m;
}

inline BinaryMask jitter(const BinaryMask& src, Rng& rng) {
  BinaryMask m = src;
  const int dx = static_cast<int>(uniform_int(rng, -2, 2)), dy = static_cast<int>(uniform_int(rng, -2, 2));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      const int sy = y - dy, sx = x - dx;
      m.at(y, x) = (sy >= 0 && sy < m.height && sx >= 0 && sx < m.width) ? src.at(sy, sx) : 0;
    }
  return m;
}

inline Scene random_scene(std::uint64_t seed, int max_images = 5, int max_dets = 10) {
  Rng rng(seed);
  Scene s;
  s.manifest.categories = {{1, "a", false}, {2, "b", false}, {3, "c", true}};
  const int ni = static_cast<int>(uniform_int(rng, 1, max_images));
  std::int64_t ann_id = 1;
  std::vector<std::vector<const InstanceAnnotation*>> by_image(ni);
  for (int i = 0; i < ni; ++i) {
    const int h = static_cast<int>(uniform_int(rng, 16, 24)), w = static_cast<int>(uniform_int(rng, 16, 24));
    // Image ids deliberately out of order.
    s.manifest.images.push_back({(ni - i) * 10, "x.png", h, w});
    const int ng = static_cast<int>(uniform_int(rng, 0, 4));
    for (int k = 0; k < ng; ++k) {
      InstanceAnnotation a;
      a.id = ann_id++;
      a.image_id = (ni - i) * 10;
      a.category_id = static_cast<int>(uniform_int(rng, 1, 3));
      a.mask = rle_encode(random_blob(rng, h, w));
      a.area = static_cast<double>(rle_area(a.mask));
      a.bbox = rle_bbox(a.mask);
      a.iscrowd = uniform01(rng) < 0.1;
      s.manifest.annotations.push_back(a);
    }
  }
  const int nd = static_cast<int>(uniform_int(rng, 0, max_dets));
  for (int k = 0; k < nd; ++k) {
    const ImageInfo& im = s.manifest.images[uniform_int(rng, 0, ni - 1)];
    DetectionResult d;
    d.image_id = im.id;
    std::vector<const InstanceAnnotation*> g;
    for (const auto& a : s.manifest.annotations)
      if (a.image_id == im.id) g.push_back(&a);
    BinaryMask m;
    if (!g.empty() && uniform01(rng) < 0.7) {
      const auto* src = g[uniform_int(rng, 0, g.size() - 1)];
      m = jitter(rle_decode(src->mask), rng);
      d.category_id = uniform01(rng) < 0.85 ? src->category_id : static_cast<int>(uniform_int(rng, 1, 3));
    } else {
      m = random_blob(rng, im.height, im.width);
      d.category_id = static_cast<int>(uniform_int(rng, 1, 3));
    }
    d.mask = rle_encode(m);
    d.bbox = rle_bbox(d.mask);
    // Coarse scores so ties occur.
    d.score = static_cast<double>(uniform_int(rng, 1, 8)) / 8.0;
    s.detections.push_back(d);
  }
  return s;
}

inline bool same_report(const EvalReport& a, const EvalReport& b, double tol) {
  auto eq = [&](const std::optional<double>& x, const std::optional<double>& y) {
    if (x.has_value() != y.has_value()) return false;
    return !x || std::abs(*x - *y) <= tol;
  };
  if (!eq(a.map, b.map) || !eq(a.ap50, b.ap50) || !eq(a.ap75, b.ap75) || !eq(a.rare_map, b.rare_map))
    return false;
  if (a.per_category.size() != b.per_category.size()) return false;
  for (const auto& [id, v] : a.per_category) {
    const auto it = b.per_category.find(id);
    if (it == b.per_category.end() || !eq(v, it->second)) return false;
  }
  return true;
}

}  // namespace plainseg::oracle
