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

#include "plainseg/rle.hpp"

#include <algorithm>
#include <cmath>

#include "plainseg/error.hpp"

namespace plainseg {

double box_iou(const BoundingBox& a, const BoundingBox& b) { return box_iou(to_corners(a), to_corners(b)); }

double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

RleMask rle_encode(const BinaryMask& mask) {
  if (mask.height <= 0 || mask.width <= 0) {
    throw DimensionError("rle_encode: mask dimensions must be positive, got " +
                         std::to_string(mask.height) + "x" + std::to_string(mask.width));
  }
  RleMask rle{mask.height, mask.width, {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width; ++x) {
    for (int y = 0; y < mask.height; ++y) {
      const std::uint8_t v = mask.at(y, x) ? 1 : 0;
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

namespace {

std::uint64_t counts_sum(const RleMask& rle) {
  std::uint64_t s = 0;
  for (auto c : rle.counts) s += c;
  return s;
}

void check_sum(const RleMask& rle) {
  const std::uint64_t expected = static_cast<std::uint64_t>(rle.height) * rle.width;
  if (rle.height < 0 || rle.width < 0 || counts_sum(rle) != expected) {
    throw MalformedRleError("RLE counts sum to " + std::to_string(counts_sum(rle)) +
                            " but mask is " + std::to_string(rle.height) + "x" +
                            std::to_string(rle.width));
  }
}

}  // namespace

BinaryMask rle_decode(const RleMask& rle) {
  check_sum(rle);
  BinaryMask mask(rle.height, rle.width);
  std::uint64_t pos = 0;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    if (i % 2 == 1) {
      for (std::uint64_t k = pos; k < pos + rle.counts[i]; ++k) {
        const int x = static_cast<int>(k / rle.height);
        const int y = static_cast<int>(k % rle.height);
        mask.at(y, x) = 1;
      }
    }
    pos += rle.counts[i];
  }
  return mask;
}

void rle_validate(const RleMask& rle) {
  check_sum(rle);
  for (std::size_t i = 1; i < rle.counts.size(); ++i) {
    if (rle.counts[i] == 0) {
      throw MalformedRleError("RLE has an empty interior run at position " + std::to_string(i));
    }
  }
}

std::uint64_t rle_area(const RleMask& rle) {
  std::uint64_t a = 0;
  for (std::size_t i = 1; i < rle.counts.size(); i += 2) a += rle.counts[i];
  return a;
}

BoundingBox rle_bbox(const RleMask& rle) {
  if (rle.height == 0) return {};
  const std::uint64_t h = rle.height;
  std::uint64_t pos = 0;
  std::uint64_t xs = UINT64_MAX, xe = 0, ys = UINT64_MAX, ye = 0;
  bool any = false;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    const std::uint64_t n = rle.counts[i];
    if (i % 2 == 1 && n > 0) {
      any = true;
      const std::uint64_t first = pos;
      const std::uint64_t last = pos + n - 1;
      xs = std::min(xs, first / h);
      xe = std::max(xe, last / h);
      if (first / h == last / h) {
        ys = std::min(ys, first % h);
        ye = std::max(ye, last % h);
      } else {
        ys = 0;
        ye = h - 1;
      }
    }
    pos += n;
  }
  if (!any) return {};
  return {static_cast<double>(xs), static_cast<double>(ys), static_cast<double>(xe - xs + 1),
          static_cast<double>(ye - ys + 1)};
}

std::uint64_t rle_intersection_area(const RleMask& a, const RleMask& b) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("mask size mismatch: " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width));
  }
  std::size_t ia = 0, ib = 0;
  std::uint64_t ra = a.counts.empty() ? 0 : a.counts[0];
  std::uint64_t rb = b.counts.empty() ? 0 : b.counts[0];
  bool va = false, vb = false;
  std::uint64_t inter = 0;
  while (ia < a.counts.size() && ib < b.counts.size()) {
    const std::uint64_t step = std::min(ra, rb);
    if (va && vb) inter += step;
    ra -= step;
    rb -= step;
    if (ra == 0 && ++ia < a.counts.size()) {
      ra = a.counts[ia];
      va = !va;
    }
    if (rb == 0 && ++ib < b.counts.size()) {
      rb = b.counts[ib];
      vb = !vb;
    }
  }
  return inter;
}

double mask_iou(const RleMask& a, const RleMask& b, bool b_is_crowd) {
  const double inter = static_cast<double>(rle_intersection_area(a, b));
  const double area_a = static_cast<double>(rle_area(a));
  const double denom = b_is_crowd ? area_a : area_a + static_cast<double>(rle_area(b)) - inter;
  return denom > 0.0 ? inter / denom : 0.0;
}

std::vector<double> mask_iou_matrix(std::span<const RleMask> dts, std::span<const RleMask> gts,
                                    std::span<const std::uint8_t> gt_is_crowd) {
  const int nd = static_cast<int>(dts.size());
  const int ng = static_cast<int>(gts.size());
  std::vector<double> out(static_cast<std::size_t>(nd) * ng);
#pragma omp parallel for schedule(dynamic)
  for (int d = 0; d < nd; ++d)
    for (int g = 0; g < ng; ++g)
      out[static_cast<std::size_t>(d) * ng + g] = mask_iou(dts[d], gts[g], gt_is_crowd[g] != 0);
  return out;
}

namespace ref {
std::vector<double> mask_iou_matrix(std::span<const RleMask> dts, std::span<const RleMask> gts,
                                    std::span<const std::uint8_t> gt_is_crowd) {
  std::vector<double> out;
  out.reserve(dts.size() * gts.size());
  for (const auto& d : dts)
    for (std::size_t g = 0; g < gts.size(); ++g) out.push_back(mask_iou(d, gts[g], gt_is_crowd[g]));
  return out;
}
}  // namespace ref

std::string rle_counts_to_string(const RleMask& rle) {
  std::string s;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    long long x = rle.counts[i];
    if (i > 2) x -= static_cast<long long>(rle.counts[i - 2]);
    bool more = true;
    while (more) {
      char c = static_cast<char>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

RleMask rle_counts_from_string(const std::string& s, int height, int width) {
  RleMask rle{height, width, {}};
  std::size_t p = 0;
  std::vector<long long> counts;
  while (p < s.size()) {
    long long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw MalformedRleError("truncated compressed RLE string");
      const long long c = static_cast<long long>(s[p]) - 48;
      if (c < 0 || c > 63) throw MalformedRleError("invalid character in compressed RLE string");
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
    }
    if (counts.size() > 2) x += counts[counts.size() - 2];
    if (x < 0) throw MalformedRleError("negative run in compressed RLE string");
    counts.push_back(x);
  }
  for (long long c : counts) rle.counts.push_back(static_cast<std::uint32_t>(c));
  check_sum(rle);
  return rle;
}

BinaryMask rasterize_polygons(const std::vector<std::vector<double>>& polygons, int height,
                              int width) {
  BinaryMask mask(height, width);
  std::vector<double> xs;
  for (const auto& poly : polygons) {
    const std::size_t n = poly.size() / 2;
    if (n < 3) continue;
    for (int y = 0; y < height; ++y) {
      const double yc = y + 0.5;
      xs.clear();
      for (std::size_t i = 0; i < n; ++i) {
        const double x1 = poly[2 * i], y1 = poly[2 * i + 1];
        const double x2 = poly[2 * ((i + 1) % n)], y2 = poly[2 * ((i + 1) % n) + 1];
        if ((y1 > yc) != (y2 > yc)) xs.push_back(x1 + (yc - y1) * (x2 - x1) / (y2 - y1));
      }
      std::sort(xs.begin(), xs.end());
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        // Pixel centres x + 0.5 in [xs[k], xs[k+1]).
        const int x_begin = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
        const int x_end = std::min(width, static_cast<int>(std::ceil(xs[k + 1] - 0.5)));
        for (int x = x_begin; x < x_end; ++x) mask.at(y, x) = 1;
      }
    }
  }
  return mask;
}

}  // namespace plainseg
