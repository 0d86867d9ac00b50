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

// Serial reference kernels against the OpenMP/BLAS production kernels.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include <vector>

#include "plainseg/kernels.hpp"
#include "plainseg/rle.hpp"
#include "plainseg/rng.hpp"

namespace {

using namespace plainseg;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, -1.0, 1.0);
  return v;
}

kernels::AttentionLayout layout_for(int grid, int win, int dim, int heads) {
  kernels::AttentionLayout l;
  l.tokens = grid * grid;
  l.dim = dim;
  l.heads = heads;
  for (int wy = 0; wy < grid; wy += win)
    for (int wx = 0; wx < grid; wx += win) {
      std::vector<int> idx;
      for (int y = wy; y < std::min(grid, wy + win); ++y)
        for (int x = wx; x < std::min(grid, wx + win); ++x) idx.push_back(y * grid + x);
      l.windows.push_back(idx);
    }
  return l;
}

template <bool Ref>
void BM_Gemm(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : st) {
    if constexpr (Ref)
      kernels::ref::gemm(false, false, n, n, n, 1.0, a.data(), n, b.data(), n, 0.0, c.data(), n);
    else
      kernels::gemm(false, false, n, n, n, 1.0, a.data(), n, b.data(), n, 0.0, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(st.iterations() * 2LL * n * n * n);
}

template <bool Ref>
void BM_Im2col(benchmark::State& st) {
  const int c = 32, h = 64, w = 64;
  auto x = random_vec(c * h * w, 3);
  std::vector<double> col(static_cast<std::size_t>(c) * 9 * h * w);
  for (auto _ : st) {
    if constexpr (Ref)
      kernels::ref::im2col(x.data(), c, h, w, 3, 1, 1, col.data());
    else
      kernels::im2col(x.data(), c, h, w, 3, 1, 1, col.data());
    benchmark::DoNotOptimize(col.data());
  }
}

template <bool Ref>
void BM_RoiAlign(benchmark::State& st) {
  const int c = 32, h = 32, w = 32, r = 128;
  auto f = random_vec(c * h * w, 4);
  Rng rng(5);
  std::vector<double> boxes;
  for (int i = 0; i < r; ++i) {
    const double x1 = uniform(rng, 0, 24), y1 = uniform(rng, 0, 24);
    boxes.insert(boxes.end(), {x1, y1, x1 + uniform(rng, 1, 8), y1 + uniform(rng, 1, 8)});
  }
  kernels::RoiAlignParams p;
  std::vector<double> out(static_cast<std::size_t>(r) * c * 49);
  for (auto _ : st) {
    if constexpr (Ref)
      kernels::ref::roi_align_forward(f.data(), c, h, w, boxes, p, out.data());
    else
      kernels::roi_align_forward(f.data(), c, h, w, boxes, p, out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Ref>
void BM_Attention(benchmark::State& st) {
  const int grid = 16, dim = 96, heads = 6;
  const auto layout = layout_for(grid, static_cast<int>(st.range(0)), dim, heads);
  auto qkv = random_vec(static_cast<std::size_t>(grid) * grid * 3 * dim, 6);
  std::vector<double> out(static_cast<std::size_t>(grid) * grid * dim), probs;
  for (auto _ : st) {
    if constexpr (Ref)
      kernels::ref::attention_forward(layout, qkv.data(), out.data(), probs);
    else
      kernels::attention_forward(layout, qkv.data(), out.data(), probs);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Ref>
void BM_LayerNorm(benchmark::State& st) {
  const int rows = 256, dim = 96;
  auto x = random_vec(rows * dim, 7), g = random_vec(dim, 8), b = random_vec(dim, 9);
  std::vector<double> y(rows * dim), mean(rows), rstd(rows);
  for (auto _ : st) {
    if constexpr (Ref)
      kernels::ref::layer_norm_forward(x.data(), g.data(), b.data(), rows, dim, 1e-6, y.data(),
                                       mean.data(), rstd.data());
    else
      kernels::layer_norm_forward(x.data(), g.data(), b.data(), rows, dim, 1e-6, y.data(),
                                  mean.data(), rstd.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Ref>
void BM_Resize(benchmark::State& st) {
  Rng rng(10);
  std::vector<std::uint8_t> src(256 * 256 * 3);
  for (auto& v : src) v = static_cast<std::uint8_t>(uniform_int(rng, 0, 255));
  std::vector<std::uint8_t> dst(320 * 320 * 3);
  for (auto _ : st) {
    if constexpr (Ref)
      kernels::ref::resize_bilinear_u8(src.data(), 256, 256, 3, dst.data(), 320, 320);
    else
      kernels::resize_bilinear_u8(src.data(), 256, 256, 3, dst.data(), 320, 320);
    benchmark::DoNotOptimize(dst.data());
  }
}

template <bool Ref>
void BM_MaskIou(benchmark::State& st) {
  Rng rng(11);
  auto make = [&](int n) {
    std::vector<RleMask> v;
    for (int i = 0; i < n; ++i) {
      BinaryMask m(128, 128);
      const int x0 = static_cast<int>(uniform_int(rng, 0, 90)), y0 = static_cast<int>(uniform_int(rng, 0, 90));
      for (int y = y0; y < y0 + 30; ++y)
        for (int x = x0; x < x0 + 30; ++x) m.at(y, x) = 1;
      v.push_back(rle_encode(m));
    }
    return v;
  };
  const auto dts = make(100), gts = make(8);
  std::vector<std::uint8_t> crowd(gts.size(), 0);
  for (auto _ : st) {
    auto ious = Ref ? ref::mask_iou_matrix(dts, gts, crowd) : mask_iou_matrix(dts, gts, crowd);
    benchmark::DoNotOptimize(ious.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<false>)->Name("gemm/blas")->Arg(64)->Arg(256);
BENCHMARK(BM_Im2col<true>)->Name("im2col/serial");
BENCHMARK(BM_Im2col<false>)->Name("im2col/omp");
BENCHMARK(BM_RoiAlign<true>)->Name("roi_align/serial");
BENCHMARK(BM_RoiAlign<false>)->Name("roi_align/omp");
BENCHMARK(BM_Attention<true>)->Name("attention/serial")->Arg(4)->Arg(16);
BENCHMARK(BM_Attention<false>)->Name("attention/omp")->Arg(4)->Arg(16);
BENCHMARK(BM_LayerNorm<true>)->Name("layer_norm/serial");
BENCHMARK(BM_LayerNorm<false>)->Name("layer_norm/omp");
BENCHMARK(BM_Resize<true>)->Name("resize/serial");
BENCHMARK(BM_Resize<false>)->Name("resize/omp");
BENCHMARK(BM_MaskIou<true>)->Name("mask_iou/serial");
BENCHMARK(BM_MaskIou<false>)->Name("mask_iou/omp");

BENCHMARK_MAIN();
