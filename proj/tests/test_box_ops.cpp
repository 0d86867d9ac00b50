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

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "plainseg/box_ops.hpp"
#include <set>

using namespace plainseg;

namespace {

std::vector<Box> random_boxes(Rng& rng, int n, double extent = 64.0) {
  std::vector<Box> out;
  for (int i = 0; i < n; ++i) {
    const double x = uniform(rng, 0, extent), y = uniform(rng, 0, extent);
    const double w = uniform(rng, 2, extent / 2), h = uniform(rng, 2, extent / 2);
    out.push_back({x, y, x + w, y + h});
  }
  return out;
}

// Clusters of near-duplicates make suppression chains likely.
std::vector<Box> clustered_boxes(Rng& rng, int n) {
  std::vector<Box> centres = random_boxes(rng, 3, 48.0), out;
  for (int i = 0; i < n; ++i) {
    Box b = centres[uniform_int(rng, 0, 2)];
    const double dx = uniform(rng, -4, 4), dy = uniform(rng, -4, 4);
    b = {b.x1 + dx, b.y1 + dy, b.x2 + dx + uniform(rng, -3, 3), b.y2 + dy + uniform(rng, -3, 3)};
    out.push_back(b);
  }
  return out;
}

}  // namespace

TEST_CASE("anchors: count, centres, area and aspect ratio") {
  const std::vector<double> ratios = {0.5, 1.0, 2.0};
  const auto a = generate_anchors(3, 4, 8, 32.0, ratios);
  REQUIRE(a.size() == 3u * 4u * 3u);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      for (int r = 0; r < 3; ++r) {
        const Box& b = a[(y * 4 + x) * 3 + r];
        CHECK(0.5 * (b.x1 + b.x2) == doctest::Approx((x + 0.5) * 8));
        CHECK(0.5 * (b.y1 + b.y2) == doctest::Approx((y + 0.5) * 8));
        CHECK(b.area() == doctest::Approx(32.0 * 32.0));
        CHECK(b.height() / b.width() == doctest::Approx(ratios[r]));
      }
}

TEST_CASE("encode then decode is the identity") {
  Rng rng(3);
  const BoxCoderWeights w{10, 10, 5, 5};
  for (int i = 0; i < 200; ++i) {
    const auto bs = random_boxes(rng, 2);
    const Box back = decode_box(bs[0], encode_box(bs[0], bs[1], w), w);
    CHECK(back.x1 == doctest::Approx(bs[1].x1).epsilon(1e-12));
    CHECK(back.y1 == doctest::Approx(bs[1].y1).epsilon(1e-12));
    CHECK(back.x2 == doctest::Approx(bs[1].x2).epsilon(1e-12));
    CHECK(back.y2 == doctest::Approx(bs[1].y2).epsilon(1e-12));
  }
  // Zero deltas leave the box alone.
  const Box b{1, 2, 11, 22};
  CHECK(decode_box(b, {0, 0, 0, 0}, w) == b);
}

TEST_CASE("decode clamps huge log-scale deltas") {
  const Box b{0, 0, 10, 10};
  const Box big = decode_box(b, {0, 0, 100, 100}, {});
  CHECK(big.width() == doctest::Approx(10 * std::exp(kLogScaleClamp)));
  CHECK(std::isfinite(big.x2));
  const auto clipped = decode_boxes(std::vector<Box>{b}, std::vector<Deltas>{{0, 0, 100, 100}}, {}, 20, 30);
  CHECK(clipped[0].x2 == 30.0);
  CHECK(clipped[0].y1 == 0.0);
}

TEST_CASE("nms agrees with the brute-force oracle on 100 scenes") {
  for (int s = 0; s < 100; ++s) {
    Rng rng(1000 + s);
    const int n = static_cast<int>(uniform_int(rng, 0, 30));
    const auto boxes = s % 2 ? clustered_boxes(rng, n) : random_boxes(rng, n);
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) scores.push_back(std::round(uniform(rng, 0, 5)) / 5.0);
    const double thr = uniform(rng, 0.2, 0.8);
    CHECK(nms(boxes, scores, thr) == oracle::nms(boxes, scores, thr));
  }
}

TEST_CASE("nms output: kept boxes never overlap beyond the threshold") {
  Rng rng(9);
  const auto boxes = clustered_boxes(rng, 40);
  std::vector<double> scores;
  for (int i = 0; i < 40; ++i) scores.push_back(uniform01(rng));
  const auto keep = nms(boxes, scores, 0.5);
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t j = i + 1; j < keep.size(); ++j) CHECK(box_iou(boxes[keep[i]], boxes[keep[j]]) <= 0.5);
  for (std::size_t i = 1; i < keep.size(); ++i) CHECK(scores[keep[i - 1]] >= scores[keep[i]]);
}

TEST_CASE("batched nms never suppresses across groups") {
  const std::vector<Box> boxes = {{0, 0, 10, 10}, {0, 0, 10, 10}, {0, 0, 10, 10}};
  const std::vector<double> scores = {0.9, 0.8, 0.7};
  const std::vector<int> groups = {0, 1, 0};
  CHECK(batched_nms(boxes, scores, groups, 0.5) == std::vector<int>{0, 1});
}

TEST_CASE("target assignment agrees with the brute-force oracle on 100 scenes") {
  for (int s = 0; s < 100; ++s) {
    Rng rng(5000 + s);
    const auto boxes = clustered_boxes(rng, static_cast<int>(uniform_int(rng, 0, 40)));
    auto gts = random_boxes(rng, static_cast<int>(uniform_int(rng, 0, 4)), 48.0);
    // Duplicate GTs exercise the tie rule.
    if (!gts.empty() && s % 3 == 0) gts.push_back(gts.front());
    const Assignment a = assign_targets(boxes, gts, 0.5);
    const auto o = oracle::assign(boxes, gts, 0.5);
    CHECK(a.label == o.label);
    CHECK(a.matched_gt == o.matched);
    const Assignment r = assign_anchors(boxes, gts, 0.3, 0.7);
    const auto ro = oracle::assign_anchors(boxes, gts, 0.3, 0.7);
    CHECK(r.label == ro.label);
  }
}

TEST_CASE("assignment with no ground truth marks everything negative") {
  const std::vector<Box> boxes = {{0, 0, 5, 5}, {1, 1, 3, 3}};
  const Assignment a = assign_anchors(boxes, {}, 0.3, 0.7);
  CHECK(a.label == std::vector<int>{0, 0});
  CHECK(a.matched_gt == std::vector<int>{-1, -1});
}

TEST_CASE("label sampling respects the quota and skips ignored entries") {
  Rng rng(1);
  std::vector<int> labels;
  for (int i = 0; i < 500; ++i) labels.push_back(static_cast<int>(uniform_int(rng, -1, 1)));
  Rng a(7), b(7);
  const auto s1 = sample_labels(labels, 64, 0.25, a);
  const auto s2 = sample_labels(labels, 64, 0.25, b);
  CHECK(s1 == s2);
  CHECK(s1.size() == 64u);
  int pos = 0;
  std::set<int> uniq(s1.begin(), s1.end());
  CHECK(uniq.size() == s1.size());
  for (int i : s1) {
    CHECK(labels[i] != -1);
    pos += labels[i] == 1;
  }
  CHECK(pos == 16);
  // Too few positives: the remainder is filled with negatives.
  std::vector<int> few(100, 0);
  few[3] = 1;
  const auto s3 = sample_labels(few, 20, 0.5, a);
  CHECK(s3.size() == 20u);
  CHECK(s3.front() == 3);
}
