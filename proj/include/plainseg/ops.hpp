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

// Differentiable operations on Vars. Image-like tensors are channel-first:
// [C,H,W] for one map, [N,C,H,W] for a batch of RoIs.

#include <memory>
#include <span>
#include <vector>

#include "plainseg/autograd.hpp"
#include "plainseg/kernels.hpp"

namespace plainseg::ag {

Var add(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& x);
Var gelu(const Var& x);
Var sum(const Var& x);

// y[n,out] = x[n,in] * w[in,out] + b[out]; b may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);

// Normalizes over the last dimension.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// qkv [N, 3D] -> [N, D]. When probs is non-null it receives the softmax weights.
Var attention(const Var& qkv, std::shared_ptr<const kernels::AttentionLayout> layout,
              std::vector<double>* probs = nullptr);

// x [N,Cin,H,W] or [Cin,H,W]; w [Cout, Cin*k*k]; b [Cout] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, int ksize, int stride, int pad);
// Kernel 2, stride 2. w [Cin, Cout*4] indexed co*4 + dy*2 + dx.
Var conv_transpose2x2(const Var& x, const Var& w, const Var& b);
Var max_pool2x2(const Var& x);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<int>& perm);
// Concatenation along dimension 0.
Var concat0(const std::vector<Var>& xs);

// Pools each box from the pyramid level named in `level_of_box`.
// levels[l] is [C, H_l, W_l] with stride strides[l]; result [R, C, ph, pw].
Var roi_align_levels(const std::vector<Var>& levels, std::span<const double> strides,
                     std::span<const double> boxes, std::span<const int> level_of_box,
                     const kernels::RoiAlignParams& params);

// x [R,K,H,W] -> [R,H,W], taking channel index[r] for row r.
Var select_channel(const Var& x, std::span<const int> index);

// Separable bicubic (A = -0.75, half-pixel centres) resize of a token grid
// x [h*w, D] to [nh*nw, D].
Var bicubic_resize_tokens(const Var& x, int h, int w, int nh, int nw);

// Sum_i weight_i * bce(logit_i, target_i) / normalizer.
Var bce_with_logits(const Var& logits, const Tensor& targets, const Tensor& weights,
                    double normalizer);
// Sum_r -log softmax(logits[r])[label_r] / normalizer; logits [R, C].
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels, double normalizer);
// Sum_r row_weight_r * sum_k smoothl1(pred[r,k] - target[r,k]) / normalizer.
Var smooth_l1(const Var& pred, const Tensor& target, const Tensor& row_weights, double beta,
              double normalizer);
// Sum_i w_i * s_i over scalar Vars.
Var weighted_sum(const std::vector<Var>& scalars, std::span<const double> weights);

}  // namespace plainseg::ag
