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

#include "plainseg/box_ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace plainseg {

std::vector<Box> generate_anchors(int height, int width, int stride, double size,
                                  std::span<const double> ratios) {
  std::vector<Box> out;
  out.reserve(static_cast<std::size_t>(height) * width * ratios.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double cx = (x + 0.5) * stride, cy = (y + 0.5) * stride;
      for (double r : ratios) {
        const double w = size / std::sqrt(r), h = size * std::sqrt(r);
        out.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
      }
    }
  return out;
}

Deltas encode_box(const Box& s, const Box& t, const BoxCoderWeights& w) {
  const double sw = s.width(), sh = s.height();
  const double scx = s.x1 + 0.5 * sw, scy = s.y1 + 0.5 * sh;
  const double tw = t.width(), th = t.height();
  const double tcx = t.x1 + 0.5 * tw, tcy = t.y1 + 0.5 * th;
  return {w.wx * (tcx - scx) / sw, w.wy * (tcy - scy) / sh, w.ww * std::log(tw / sw),
          w.wh * std::log(th / sh)};
}

Box decode_box(const Box& s, const Deltas& d, const BoxCoderWeights& w) {
  const double sw = s.width(), sh = s.height();
  const double scx = s.x1 + 0.5 * sw, scy = s.y1 + 0.5 * sh;
  const double dw = std::min(d[2] / w.ww, kLogScaleClamp);
  const double dh = std::min(d[3] / w.wh, kLogScaleClamp);
  const double cx = scx + d[0] / w.wx * sw, cy = scy + d[1] / w.wy * sh;
  const double pw = sw * std::exp(dw), ph = sh * std::exp(dh);
  return {cx - 0.5 * pw, cy - 0.5 * ph, cx + 0.5 * pw, cy + 0.5 * ph};
}

std::vector<Box> decode_boxes(std::span<const Box> src, std::span<const Deltas> deltas,
                              const BoxCoderWeights& w, double img_h, double img_w) {
  std::vector<Box> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = clip_box(decode_box(src[i], deltas[i], w), img_h, img_w);
  return out;
}

std::vector<int> nms(std::span<const Box> boxes, std::span<const double> scores, double thr) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> keep;
  std::vector<char> removed(boxes.size(), 0);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const int i = order[oi];
    if (removed[i]) continue;
    keep.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const int j = order[oj];
      if (!removed[j] && box_iou(boxes[i], boxes[j]) > thr) removed[j] = 1;
    }
  }
  return keep;
}

std::vector<int> batched_nms(std::span<const Box> boxes, std::span<const double> scores,
                             std::span<const int> groups, double thr) {
  std::map<int, std::vector<int>> by_group;
  for (std::size_t i = 0; i < boxes.size(); ++i) by_group[groups[i]].push_back(static_cast<int>(i));
  std::vector<int> keep;
  for (const auto& [g, idx] : by_group) {
    std::vector<Box> b;
    std::vector<double> s;
    for (int i : idx) {
      b.push_back(boxes[i]);
      s.push_back(scores[i]);
    }
    for (int k : nms(b, s, thr)) keep.push_back(idx[k]);
  }
  std::stable_sort(keep.begin(), keep.end(), [&](int a, int b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  return keep;
}

namespace {

void best_match(std::span<const Box> boxes, std::span<const Box> gts, Assignment& a,
                std::vector<double>* ious) {
  const std::size_t n = boxes.size(), g = gts.size();
  a.matched_gt.assign(n, -1);
  a.max_iou.assign(n, 0.0);
  if (ious) ious->assign(n * g, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1.0;
    for (std::size_t j = 0; j < g; ++j) {
      const double v = box_iou(boxes[i], gts[j]);
      if (ious) (*ious)[i * g + j] = v;
      if (v > best) {
        best = v;
        a.matched_gt[i] = static_cast<int>(j);
      }
    }
    a.max_iou[i] = g ? best : 0.0;
  }
}

}  // namespace

Assignment assign_targets(std::span<const Box> boxes, std::span<const Box> gts, double threshold) {
  Assignment a;
  best_match(boxes, gts, a, nullptr);
  a.label.assign(boxes.size(), 0);
  for (std::size_t i = 0; i < boxes.size(); ++i)
    if (a.matched_gt[i] >= 0 && a.max_iou[i] >= threshold) a.label[i] = 1;
  return a;
}

Assignment assign_anchors(std::span<const Box> anchors, std::span<const Box> gts, double low,
                          double high) {
  Assignment a;
  std::vector<double> ious;
  best_match(anchors, gts, a, &ious);
  const std::size_t n = anchors.size(), g = gts.size();
  a.label.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (g == 0) continue;
    if (a.max_iou[i] >= high) a.label[i] = 1;
    else if (a.max_iou[i] >= low) a.label[i] = -1;
  }
  for (std::size_t j = 0; j < g; ++j) {
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) best = std::max(best, ious[i * g + j]);
    if (best <= 0.0) continue;
    for (std::size_t i = 0; i < n; ++i)
      if (ious[i * g + j] == best) a.label[i] = 1;
  }
  return a;
}

std::vector<int> sample_labels(std::span<const int> labels, int num, double positive_fraction,
                               Rng& rng) {
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) pos.push_back(static_cast<int>(i));
    else if (labels[i] == 0) neg.push_back(static_cast<int>(i));
  }
  auto take = [&](std::vector<int>& v, std::size_t k) {
    k = std::min(k, v.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(v[i], v[i + uniform_int(rng, 0, v.size() - i - 1)]);
    v.resize(k);
  };
  take(pos, static_cast<std::size_t>(num * positive_fraction));
  take(neg, static_cast<std::size_t>(num) - pos.size());
  pos.insert(pos.end(), neg.begin(), neg.end());
  return pos;
}

}  // namespace plainseg
