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

// Compute kernels behind the autograd ops. Every kernel in `plainseg::kernels`
// is the production path (OpenMP over independent outputs, or BLAS for gemm);
// `plainseg::kernels::ref` holds plain serial loops kept as test oracles and
// benchmark baselines. Parallel loops never split a floating-point reduction
// across threads, so results do not depend on the thread count.

#include <cstdint>
#include <span>
#include <vector>

namespace plainseg::kernels {

// C[M,N] = alpha * op(A) * op(B) + beta * C, row-major.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);

// Unfold [C,H,W] into [C*k*k, Ho*Wo] columns for a square kernel.
void im2col(const double* x, int channels, int height, int width, int ksize, int stride, int pad,
            double* col);
// Adjoint of im2col; accumulates into dx (which must be zeroed by the caller if needed).
void col2im(const double* col, int channels, int height, int width, int ksize, int stride,
            int pad, double* dx);

struct RoiAlignParams {
  int pooled_h = 7;
  int pooled_w = 7;
  int sampling_ratio = 2;  // <= 0 selects ceil(roi_size / pooled_size) per RoI
  double spatial_scale = 1.0;
  bool aligned = true;     // half-pixel offset on box corners
};

// feature [C,H,W]; boxes [R,4] as x1,y1,x2,y2 in input-image pixels; out [R,C,ph,pw].
void roi_align_forward(const double* feature, int channels, int height, int width,
                       std::span<const double> boxes, const RoiAlignParams& p, double* out);
void roi_align_backward(const double* dout, int channels, int height, int width,
                        std::span<const double> boxes, const RoiAlignParams& p, double* dfeature);

// Multi-head self-attention over token groups. qkv is [N, 3*D] laid out as
// q | k | v per token. Each window lists token indices that attend only to
// one another; a single window holding every token is global attention.
struct AttentionLayout {
  int tokens = 0;
  int dim = 0;
  int heads = 1;
  std::vector<std::vector<int>> windows;
};

// probs receives the softmax weights, window-major then head-major, each
// block n*n row-major where n is that window's size.
void attention_forward(const AttentionLayout& layout, const double* qkv, double* out,
                       std::vector<double>& probs);
void attention_backward(const AttentionLayout& layout, const double* qkv,
                        const std::vector<double>& probs, const double* dout, double* dqkv);
std::size_t attention_probs_size(const AttentionLayout& layout);

// Row-wise layer norm over the last dimension of x [rows, dim].
void layer_norm_forward(const double* x, const double* gamma, const double* beta, int rows,
                        int dim, double eps, double* y, double* mean, double* rstd);
void layer_norm_backward(const double* x, const double* gamma, const double* mean,
                         const double* rstd, const double* dy, int rows, int dim, double* dx,
                         double* dgamma, double* dbeta);

// Half-pixel-centre bilinear resize of an interleaved 8-bit image.
void resize_bilinear_u8(const std::uint8_t* src, int src_h, int src_w, int channels,
                        std::uint8_t* dst, int dst_h, int dst_w);

namespace ref {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);
void im2col(const double* x, int channels, int height, int width, int ksize, int stride, int pad,
            double* col);
void col2im(const double* col, int channels, int height, int width, int ksize, int stride,
            int pad, double* dx);
void roi_align_forward(const double* feature, int channels, int height, int width,
                       std::span<const double> boxes, const RoiAlignParams& p, double* out);
void roi_align_backward(const double* dout, int channels, int height, int width,
                        std::span<const double> boxes, const RoiAlignParams& p, double* dfeature);
void attention_forward(const AttentionLayout& layout, const double* qkv, double* out,
                       std::vector<double>& probs);
void attention_backward(const AttentionLayout& layout, const double* qkv,
                        const std::vector<double>& probs, const double* dout, double* dqkv);
void layer_norm_forward(const double* x, const double* gamma, const double* beta, int rows,
                        int dim, double eps, double* y, double* mean, double* rstd);
void layer_norm_backward(const double* x, const double* gamma, const double* mean,
                         const double* rstd, const double* dy, int rows, int dim, double* dx,
                         double* dgamma, double* dbeta);
void resize_bilinear_u8(const std::uint8_t* src, int src_h, int src_w, int channels,
                        std::uint8_t* dst, int dst_h, int dst_w);

}  // namespace ref
}  // namespace plainseg::kernels
