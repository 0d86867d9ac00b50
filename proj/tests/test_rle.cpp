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

#include <numeric>

#include "doctest.h"
#include "plainseg/error.hpp"
#include "plainseg/rle.hpp"
#include "plainseg/rng.hpp"

using namespace plainseg;

namespace {

BinaryMask random_mask(Rng& rng, int h, int w, double p) {
  BinaryMask m(h, w);
  // Blobby masks: random rectangles plus sparse noise.
  const int rects = static_cast<int>(uniform_int(rng, 0, 3));
  for (int r = 0; r < rects; ++r) {
    const int y0 = static_cast<int>(uniform_int(rng, 0, h - 1)), x0 = static_cast<int>(uniform_int(rng, 0, w - 1));
    const int y1 = static_cast<int>(uniform_int(rng, y0, h - 1)), x1 = static_cast<int>(uniform_int(rng, x0, w - 1));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) m.at(y, x) = 1;
  }
  for (auto& v : m.data)
    if (uniform01(rng) < p) v ^= 1;
  return m;
}

// Dense oracle, independent of the run-length code.
double dense_iou(const BinaryMask& a, const BinaryMask& b, bool crowd) {
  double inter = 0, uni = 0, area_a = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += a.data[i] && b.data[i];
    uni += a.data[i] || b.data[i];
    area_a += a.data[i];
  }
  const double denom = crowd ? area_a : uni;
  return denom > 0 ? inter / denom : 0.0;
}

}  // namespace

TEST_CASE("encode small masks") {
  BinaryMask ones(2, 2);
  std::fill(ones.data.begin(), ones.data.end(), 1);
  CHECK(rle_encode(ones).counts == std::vector<std::uint32_t>{0, 4});
  CHECK(rle_encode(BinaryMask(2, 2)).counts == std::vector<std::uint32_t>{4});
}

TEST_CASE("decode is column-major") {
  RleMask r{2, 2, {1, 2, 1}};
  BinaryMask m = rle_decode(r);
  // Column-major order: (0,0)=0, (1,0)=1, (0,1)=1, (1,1)=0.
  CHECK(m.at(0, 0) == 0);
  CHECK(m.at(1, 0) == 1);
  CHECK(m.at(0, 1) == 1);
  CHECK(m.at(1, 1) == 0);
  CHECK(rle_area(r) == 2);
}

TEST_CASE("malformed RLE and empty masks are rejected") {
  CHECK_THROWS_AS(rle_decode(RleMask{2, 2, {1, 2}}), MalformedRleError);
  CHECK_THROWS_AS(rle_validate(RleMask{2, 2, {1, 0, 3}}), MalformedRleError);
  CHECK_THROWS_AS(rle_encode(BinaryMask(0, 3)), DimensionError);
}

TEST_CASE("round trip over a thousand random masks") {
  Rng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const int h = static_cast<int>(uniform_int(rng, 1, 24)), w = static_cast<int>(uniform_int(rng, 1, 24));
    BinaryMask m = random_mask(rng, h, w, uniform01(rng) * 0.3);
    RleMask r = rle_encode(m);
    REQUIRE(rle_decode(r) == m);
    const auto area = std::accumulate(m.data.begin(), m.data.end(), std::uint64_t{0});
    CHECK(rle_area(r) == area);
    CHECK(rle_counts_from_string(rle_counts_to_string(r), h, w) == r);
  }
}

TEST_CASE("run-based IoU matches a dense oracle") {
  Rng rng(7);
  std::vector<RleMask> dts, gts;
  std::vector<BinaryMask> dd, gd;
  for (int i = 0; i < 40; ++i) {
    dd.push_back(random_mask(rng, 19, 23, 0.05));
    dts.push_back(rle_encode(dd.back()));
  }
  for (int i = 0; i < 12; ++i) {
    gd.push_back(random_mask(rng, 19, 23, 0.02));
    gts.push_back(rle_encode(gd.back()));
  }
  std::vector<std::uint8_t> crowd(gts.size());
  for (std::size_t g = 0; g < crowd.size(); ++g) crowd[g] = g % 3 == 0;
  const auto fast = mask_iou_matrix(dts, gts, crowd);
  const auto slow = ref::mask_iou_matrix(dts, gts, crowd);
  REQUIRE(fast.size() == dts.size() * gts.size());
  for (std::size_t d = 0; d < dts.size(); ++d)
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double oracle = dense_iou(dd[d], gd[g], crowd[g]);
      CHECK(fast[d * gts.size() + g] == doctest::Approx(oracle).epsilon(1e-12));
      CHECK(slow[d * gts.size() + g] == fast[d * gts.size() + g]);
    }
}

TEST_CASE("IoU of two empty masks is zero") {
  RleMask e = rle_encode(BinaryMask(3, 3));
  CHECK(mask_iou(e, e, false) == 0.0);
  CHECK(mask_iou(e, e, true) == 0.0);
}

TEST_CASE("box IoU of half-overlapping unit squares is one third") {
  CHECK(box_iou(BoundingBox{0, 0, 2, 2}, BoundingBox{1, 0, 2, 2}) == doctest::Approx(1.0 / 3.0));
  CHECK(box_iou(Box{0, 0, 2, 2}, Box{1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0));
  CHECK(box_iou(Box{0, 0, 1, 1}, Box{2, 2, 3, 3}) == 0.0);
}

TEST_CASE("bbox of a mask is tight") {
  BinaryMask m(10, 12);
  for (int y = 3; y <= 6; ++y)
    for (int x = 2; x <= 8; ++x) m.at(y, x) = 1;
  const BoundingBox b = rle_bbox(rle_encode(m));
  CHECK(b.x == 2);
  CHECK(b.y == 3);
  CHECK(b.w == 7);
  CHECK(b.h == 4);
}

TEST_CASE("polygon rasterization") {
  // Axis-aligned 10x10 square: exactly 100 pixel centres inside.
  BinaryMask sq = rasterize_polygons({{2, 3, 12, 3, 12, 13, 2, 13}}, 20, 20);
  CHECK(std::accumulate(sq.data.begin(), sq.data.end(), 0) == 100);
  CHECK(sq.at(3, 2) == 1);
  CHECK(sq.at(2, 2) == 0);
  // Two disjoint polygons are unioned.
  BinaryMask two = rasterize_polygons({{0, 0, 2, 0, 2, 2, 0, 2}, {5, 5, 7, 5, 7, 7, 5, 7}}, 10, 10);
  CHECK(std::accumulate(two.data.begin(), two.data.end(), 0) == 8);
}

TEST_CASE("compressed counts match a known COCO string") {
  // counts [0, 4] in a 2x2 mask encodes to "04" in COCO's LEB-style alphabet.
  RleMask r{2, 2, {0, 4}};
  CHECK(rle_counts_to_string(r) == "04");
  CHECK(rle_counts_from_string("04", 2, 2) == r);
}
